//! Scalarizers: maps from a perturbed input to one real number.
//!
//! `logprob` is the mean forced log probability of the target output. The
//! text-only scalarizers generate from the perturbed input first and compare
//! that output with the target, either by embedding cosine (`sim`) or through
//! the remote scorer protocol (`remote:<id>`).

pub mod embed;
pub mod scorer;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{CallLedger, ForcedLogProbRequest, Gateway, Tier};

pub use embed::{cosine, Embedder, HashingEmbedder, HttpEmbedder, SidecarEmbedder};
pub use scorer::{HttpScorer, MockScorer, ScoreRequest, ScoreResponse, ScoreValue, ScorerId, ScorerInfo, TextScorer};

/// A map from perturbed input text to a real score.
pub trait Scalarizer: Send + Sync {
    /// Identifier recorded on results, e.g. `logprob` or `remote:bert`.
    fn id(&self) -> String;

    fn score(&self, perturbed_input: &str) -> Result<f64>;

    /// Counters of the underlying model access.
    fn ledger(&self) -> CallLedger;

    /// Evaluations that may run concurrently.
    fn max_concurrency(&self) -> usize {
        1
    }
}

/// Which scalarizer to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScalarizerSpec {
    LogProb,
    Sim,
    Remote(ScorerId),
}

impl ScalarizerSpec {
    pub fn required_tier(&self) -> Tier {
        match self {
            ScalarizerSpec::LogProb => Tier::Logprob,
            _ => Tier::Text,
        }
    }
}

impl fmt::Display for ScalarizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarizerSpec::LogProb => f.write_str("logprob"),
            ScalarizerSpec::Sim => f.write_str("sim"),
            ScalarizerSpec::Remote(id) => write!(f, "remote:{id}"),
        }
    }
}

impl FromStr for ScalarizerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logprob" | "log_prob" => Ok(ScalarizerSpec::LogProb),
            "sim" => Ok(ScalarizerSpec::Sim),
            other => match other.strip_prefix("remote:") {
                Some(id) => Ok(ScalarizerSpec::Remote(id.parse()?)),
                None => Err(Error::Config(format!(
                    "unknown scalarizer {other:?}; expected logprob, sim or remote:<id>"
                ))),
            },
        }
    }
}

impl From<ScalarizerSpec> for String {
    fn from(s: ScalarizerSpec) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for ScalarizerSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Optional services the text-only scalarizers need.
#[derive(Clone, Default)]
pub struct ScalarizerResources {
    pub embedder: Option<Arc<dyn Embedder>>,
    pub scorer: Option<Arc<dyn TextScorer>>,
}

/// Builds the scalarizer for `spec` with the given target output.
pub fn build_scalarizer(
    spec: ScalarizerSpec,
    gateway: Arc<Gateway>,
    target: &str,
    resources: &ScalarizerResources,
) -> Result<Box<dyn Scalarizer>> {
    if target.is_empty() {
        return Err(Error::EmptyTarget);
    }
    Ok(match spec {
        ScalarizerSpec::LogProb => Box::new(LogProbScalarizer::new(gateway, target)?),
        ScalarizerSpec::Sim => {
            let embedder = resources
                .embedder
                .clone()
                .ok_or_else(|| Error::Config("sim scalarizer needs an embeddings endpoint".into()))?;
            Box::new(SimScalarizer::new(gateway, target, embedder))
        }
        ScalarizerSpec::Remote(id) => {
            let scorer = resources
                .scorer
                .clone()
                .ok_or_else(|| Error::Config(format!("remote:{id} needs a scorer endpoint")))?;
            Box::new(RemoteScalarizer::new(gateway, target, scorer, id))
        }
    })
}

/// Mean log probability of the target tokens given the perturbed input.
#[derive(Debug)]
pub struct LogProbScalarizer {
    gateway: Arc<Gateway>,
    target: String,
}

impl LogProbScalarizer {
    pub fn new(gateway: Arc<Gateway>, target: impl Into<String>) -> Result<Self> {
        if gateway.tier() != Tier::Logprob {
            return Err(Error::UnsupportedTier("logprob"));
        }
        Ok(LogProbScalarizer {
            gateway,
            target: target.into(),
        })
    }
}

impl Scalarizer for LogProbScalarizer {
    fn id(&self) -> String {
        "logprob".into()
    }

    fn score(&self, perturbed_input: &str) -> Result<f64> {
        let lp = self.gateway.forced_log_prob(&ForcedLogProbRequest {
            input_text: perturbed_input.to_string(),
            target_text: self.target.clone(),
        })?;
        if lp.is_empty() {
            return Err(Error::EmptyTarget);
        }
        Ok(lp.iter().sum::<f64>() / lp.len() as f64)
    }

    fn ledger(&self) -> CallLedger {
        self.gateway.ledger()
    }

    fn max_concurrency(&self) -> usize {
        self.gateway.workers()
    }
}

/// Cosine similarity between embeddings of the perturbed output and the target.
pub struct SimScalarizer {
    gateway: Arc<Gateway>,
    target: String,
    embedder: Arc<dyn Embedder>,
    target_embedding: OnceLock<Vec<f64>>,
}

impl SimScalarizer {
    pub fn new(gateway: Arc<Gateway>, target: impl Into<String>, embedder: Arc<dyn Embedder>) -> Self {
        SimScalarizer {
            gateway,
            target: target.into(),
            embedder,
            target_embedding: OnceLock::new(),
        }
    }

    fn target_embedding(&self) -> Result<&Vec<f64>> {
        if let Some(e) = self.target_embedding.get() {
            return Ok(e);
        }
        let e = self.embedder.embed(&self.target)?;
        Ok(self.target_embedding.get_or_init(|| e))
    }
}

impl Scalarizer for SimScalarizer {
    fn id(&self) -> String {
        "sim".into()
    }

    fn score(&self, perturbed_input: &str) -> Result<f64> {
        let y = self.gateway.generate_perturbed(perturbed_input, &self.target)?;
        if y == self.target {
            return Ok(1.0);
        }
        let ey = self.embedder.embed(&y)?;
        cosine(&ey, self.target_embedding()?)
    }

    fn ledger(&self) -> CallLedger {
        self.gateway.ledger()
    }

    fn max_concurrency(&self) -> usize {
        self.gateway.workers()
    }
}

/// Score from the remote scorer protocol between the perturbed output and the target.
pub struct RemoteScalarizer {
    gateway: Arc<Gateway>,
    target: String,
    scorer: Arc<dyn TextScorer>,
    id: ScorerId,
}

impl RemoteScalarizer {
    pub fn new(gateway: Arc<Gateway>, target: impl Into<String>, scorer: Arc<dyn TextScorer>, id: ScorerId) -> Self {
        RemoteScalarizer {
            gateway,
            target: target.into(),
            scorer,
            id,
        }
    }
}

impl Scalarizer for RemoteScalarizer {
    fn id(&self) -> String {
        format!("remote:{}", self.id)
    }

    fn score(&self, perturbed_input: &str) -> Result<f64> {
        let y = self.gateway.generate_perturbed(perturbed_input, &self.target)?;
        if y.trim().is_empty() {
            return Err(Error::Scorer(format!(
                "model output is empty; scorer {} requires nonempty text",
                self.id
            )));
        }
        let resp = self.scorer.score(&ScoreRequest {
            scorer_id: self.id.to_string(),
            candidate: y,
            reference: Some(self.target.clone()),
        })?;
        resp.score.scalar()
    }

    fn ledger(&self) -> CallLedger {
        self.gateway.ledger()
    }

    fn max_concurrency(&self) -> usize {
        self.gateway.workers()
    }
}

type ScoreFn = dyn Fn(&str) -> f64 + Send + Sync;

/// Wraps a closure; every evaluation counts as one generate call.
pub struct FnScalarizer {
    id: String,
    f: Box<ScoreFn>,
    calls: AtomicU64,
    concurrency: usize,
}

impl FnScalarizer {
    pub fn new(id: impl Into<String>, f: impl Fn(&str) -> f64 + Send + Sync + 'static) -> Self {
        FnScalarizer {
            id: id.into(),
            f: Box::new(f),
            calls: AtomicU64::new(0),
            concurrency: 1,
        }
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Scalarizer for FnScalarizer {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn score(&self, perturbed_input: &str) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok((self.f)(perturbed_input))
    }

    fn ledger(&self) -> CallLedger {
        CallLedger {
            generate_calls: self.calls(),
            ..CallLedger::default()
        }
    }

    fn max_concurrency(&self) -> usize {
        self.concurrency
    }
}
