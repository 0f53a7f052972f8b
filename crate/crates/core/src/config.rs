//! Run configuration shared by the CLI and the C API.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::attribution::{AttributorConfig, Budget, CLimeConfig, LShapConfig};
use crate::error::{Error, Result};
use crate::gateway::http::{HttpConfig, HttpModel, RetryPolicy};
use crate::gateway::mock::{KeywordCopyModel, ScriptedModel, UniformModel};
use crate::gateway::{Gateway, GatewayConfig, LanguageModel, RequestCache, Tier};
use crate::multilevel::{LevelStep, Preset, RefineConfig, RefineCount};
use crate::scalarize::{
    Embedder, HashingEmbedder, HttpEmbedder, HttpScorer, ScalarizerResources, ScalarizerSpec, SidecarEmbedder,
    TextScorer,
};
use crate::segment::PhraseConfig;
use crate::unit::Level;

/// Environment variable naming the disk cache directory.
pub const CACHE_DIR_ENV: &str = "TEXTATTR_CACHE_DIR";
/// Environment variable with the scorer service base URL.
pub const SCORER_URL_ENV: &str = "TEXTATTR_SCORER_URL";
/// Default environment variable holding the model API key.
pub const DEFAULT_API_KEY_ENV: &str = "TEXTATTR_API_KEY";

/// Everything a run needs besides its input files.
///
/// Optional parameters left unset come from the preset, or from the built-in
/// defaults when no preset is named. Set values always win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `mock:keyword-copy[:MARKER]`, `mock:uniform[:VOCAB]`,
    /// `mock:scripted:REPLY`, or an OpenAI-compatible base URL.
    pub endpoint: String,
    pub model: String,
    /// Defaults to the tier the scalarizer needs.
    pub tier: Option<Tier>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub scalarizer: ScalarizerSpec,
    /// Model for the `embeddings` route when `sim` runs against HTTP.
    pub embedding_model: Option<String>,
    pub algorithm: String,
    pub preset: Option<Preset>,
    pub levels: Option<Vec<Level>>,
    pub budget_ratio: Option<f64>,
    pub max_simultaneous: Option<usize>,
    pub radius: Option<usize>,
    pub max_neighbors_perturbed: Option<usize>,
    pub refine_top_k: Option<usize>,
    pub refine_threshold: Option<f64>,
    pub seed: u64,
    /// Not echoed into result files, which must not depend on it.
    #[serde(skip_serializing)]
    pub workers: usize,
    pub target_max_new_tokens: usize,
    pub phrase: PhraseConfig,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
    pub min_interval_ms: u64,
    /// Token fraction for perturbation curves.
    pub cutoff: f64,
    /// Random-ranking baseline draws per explanation in `eval`.
    pub random_baselines: usize,
    /// Self-explanation list length; 30% of the units when unset.
    pub top_k: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            endpoint: "mock:keyword-copy".into(),
            model: "default".into(),
            tier: None,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            scalarizer: ScalarizerSpec::LogProb,
            embedding_model: None,
            algorithm: "clime".into(),
            preset: None,
            levels: None,
            budget_ratio: None,
            max_simultaneous: None,
            radius: None,
            max_neighbors_perturbed: None,
            refine_top_k: None,
            refine_threshold: None,
            seed: 0,
            workers: 4,
            target_max_new_tokens: 256,
            phrase: PhraseConfig::default(),
            retry: RetryPolicy::default(),
            timeout_secs: 120,
            min_interval_ms: 0,
            cutoff: crate::eval::DEFAULT_CUTOFF,
            random_baselines: 0,
            top_k: None,
        }
    }
}

/// Values taken from the process environment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Environment {
    pub api_key: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub scorer_url: Option<String>,
}

impl Environment {
    pub fn from_process(cfg: &RunConfig) -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        Environment {
            api_key: var(&cfg.api_key_env),
            cache_dir: var(CACHE_DIR_ENV).map(PathBuf::from),
            scorer_url: var(SCORER_URL_ENV),
        }
    }
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn tier(&self) -> Tier {
        self.tier.unwrap_or_else(|| self.scalarizer.required_tier())
    }

    fn default_attributor(&self, level_index: usize) -> Result<AttributorConfig> {
        let _ = level_index;
        Ok(match self.algorithm.as_str() {
            "loo" => AttributorConfig::Loo,
            "clime" => AttributorConfig::Clime(CLimeConfig {
                seed: self.seed,
                ..CLimeConfig::default()
            }),
            "lshap" => AttributorConfig::Lshap(LShapConfig {
                seed: self.seed,
                ..LShapConfig::default()
            }),
            other => {
                return Err(Error::Config(format!(
                    "unknown algorithm {other:?}; expected loo, clime or lshap"
                )))
            }
        })
    }

    /// The refinement schedule after applying preset and overrides.
    pub fn refine_config(&self) -> Result<RefineConfig> {
        let mut rc = match self.preset {
            Some(p) => p.config(&self.algorithm, self.seed)?,
            None => RefineConfig {
                schedule: vec![LevelStep {
                    level: Level::Sentence,
                    attributor: self.default_attributor(0)?,
                }],
                max_refine: RefineCount::Fixed(3),
                threshold: 1.0 / 3.0,
            },
        };
        if let Some(levels) = &self.levels {
            if levels.is_empty() {
                return Err(Error::Config("levels list is empty".into()));
            }
            let mut schedule = Vec::with_capacity(levels.len());
            for (i, &level) in levels.iter().enumerate() {
                let attributor = match self.preset {
                    Some(_) => rc.schedule[i.min(rc.schedule.len() - 1)].attributor.clone(),
                    None => self.default_attributor(i)?,
                };
                schedule.push(LevelStep { level, attributor });
            }
            rc.schedule = schedule;
        }
        for step in &mut rc.schedule {
            match &mut step.attributor {
                AttributorConfig::Clime(c) => {
                    if let Some(r) = self.budget_ratio {
                        c.budget = Budget::Ratio(r);
                    }
                    if let Some(k) = self.max_simultaneous {
                        c.max_simultaneous = k;
                    }
                }
                AttributorConfig::Lshap(c) => {
                    if let Some(m) = self.radius {
                        c.radius = m;
                    }
                    if let Some(k) = self.max_neighbors_perturbed {
                        c.max_neighbors_perturbed = k;
                    }
                }
                AttributorConfig::Loo => {}
            }
        }
        if let Some(k) = self.refine_top_k {
            rc.max_refine = RefineCount::Fixed(k);
        }
        if let Some(t) = self.refine_threshold {
            rc.threshold = t;
        }
        rc.validate()?;
        Ok(rc)
    }

    fn gateway_config(&self) -> GatewayConfig {
        GatewayConfig {
            workers: self.workers.max(1),
            target_max_new_tokens: self.target_max_new_tokens.max(1),
            seed: Some(self.seed),
            ..GatewayConfig::default()
        }
    }

    fn http_config(&self, base_url: &str, api_key: Option<String>) -> HttpConfig {
        HttpConfig {
            base_url: base_url.to_string(),
            api_key,
            timeout_secs: self.timeout_secs,
            retry: self.retry.clone(),
            min_interval_ms: self.min_interval_ms,
        }
    }

    fn is_mock(&self) -> bool {
        self.endpoint.starts_with("mock:")
    }

    fn model(&self, env: &Environment) -> Result<Arc<dyn LanguageModel>> {
        let tier = self.tier();
        if let Some(rest) = self.endpoint.strip_prefix("mock:") {
            let (kind, arg) = match rest.split_once(':') {
                Some((k, a)) => (k, Some(a)),
                None => (rest, None),
            };
            let model: Arc<dyn LanguageModel> = match kind {
                "keyword-copy" => {
                    let m = KeywordCopyModel::new(arg.unwrap_or("KEY"));
                    Arc::new(if tier == Tier::Logprob { m.with_logprobs() } else { m })
                }
                "uniform" => {
                    let v = arg
                        .map(|a| a.parse::<usize>())
                        .transpose()
                        .map_err(|e| Error::Config(format!("mock:uniform vocabulary: {e}")))?;
                    Arc::new(UniformModel::new(v.unwrap_or(4)))
                }
                "scripted" => Arc::new(ScriptedModel::new(arg.unwrap_or(""))),
                other => return Err(Error::Config(format!("unknown mock model {other:?}"))),
            };
            return Ok(model);
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(Error::Config(format!(
                "endpoint {:?} is neither an http(s) URL nor a mock:<name>",
                self.endpoint
            )));
        }
        Ok(Arc::new(HttpModel::new(
            self.http_config(&self.endpoint, env.api_key.clone()),
            self.model.clone(),
            tier,
        )?))
    }

    pub fn gateway(&self, env: &Environment) -> Result<Arc<Gateway>> {
        let mut gw = Gateway::new(self.model(env)?, self.gateway_config());
        if let Some(dir) = &env.cache_dir {
            gw = gw.with_cache(RequestCache::on_disk(dir)?);
        }
        Ok(Arc::new(gw))
    }

    /// Embedder and scorer clients for text-only scalarizers.
    pub fn resources(&self, env: &Environment) -> Result<ScalarizerResources> {
        let scorer: Option<Arc<dyn TextScorer>> = match &env.scorer_url {
            Some(url) => Some(Arc::new(HttpScorer::new(self.http_config(url, None))?)),
            None => None,
        };
        let embedder: Option<Arc<dyn Embedder>> = if let Some(m) = &self.embedding_model {
            if self.is_mock() {
                Some(Arc::new(HashingEmbedder::new(256)))
            } else {
                Some(Arc::new(HttpEmbedder::new(
                    self.http_config(&self.endpoint, env.api_key.clone()),
                    m.clone(),
                )?))
            }
        } else if let Some(s) = &scorer {
            Some(Arc::new(SidecarEmbedder::new(s.clone())))
        } else if self.is_mock() {
            Some(Arc::new(HashingEmbedder::new(256)))
        } else {
            None
        };
        Ok(ScalarizerResources { embedder, scorer })
    }

    /// Copy written into result files.
    pub fn echo(&self) -> RunConfig {
        RunConfig {
            workers: RunConfig::default().workers,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_single_sentence_pass() {
        let rc = RunConfig::default().refine_config().unwrap();
        assert_eq!(rc.schedule.len(), 1);
        assert_eq!(rc.schedule[0].level, Level::Sentence);
    }

    #[test]
    fn flags_override_preset() {
        let cfg = RunConfig {
            preset: Some(Preset::SmallModelSummarization),
            algorithm: "clime".into(),
            budget_ratio: Some(5.0),
            refine_top_k: Some(2),
            ..RunConfig::default()
        };
        let rc = cfg.refine_config().unwrap();
        assert_eq!(rc.max_refine, RefineCount::Fixed(2));
        assert!((rc.threshold - 1.0 / 3.0).abs() < 1e-15);
        for step in &rc.schedule {
            match &step.attributor {
                AttributorConfig::Clime(c) => {
                    assert_eq!(c.budget, Budget::Ratio(5.0));
                    assert_eq!(c.max_simultaneous, 3);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn qa_preset_binds_word_refinement() {
        let cfg = RunConfig {
            preset: Some(Preset::Qa),
            ..RunConfig::default()
        };
        let rc = cfg.refine_config().unwrap();
        assert_eq!(rc.max_refine, RefineCount::Fixed(1));
        assert_eq!(rc.threshold, -1.0);
        assert_eq!(
            rc.schedule.iter().map(|s| s.level).collect::<Vec<_>>(),
            vec![Level::Sentence, Level::Word]
        );
    }

    #[test]
    fn unknown_fields_and_endpoints_are_config_errors() {
        assert!(matches!(RunConfig::from_json(r#"{"bogus": 1}"#), Err(Error::Config(_))));
        let cfg = RunConfig {
            endpoint: "ftp://x".into(),
            ..RunConfig::default()
        };
        assert!(matches!(cfg.gateway(&Environment::default()), Err(Error::Config(_))));
        let cfg = RunConfig {
            algorithm: "kernelshap".into(),
            ..RunConfig::default()
        };
        assert!(matches!(cfg.refine_config(), Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig {
            preset: Some(Preset::LargeModelSummarization),
            scalarizer: "remote:log_nli".parse().unwrap(),
            ..RunConfig::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&json).unwrap(), cfg);
    }
}
