//! Client side of the scorer service protocol.
//!
//! Routes: `POST /v1/score` (ScoreRequest → ScoreResponse), `POST /v1/parse`
//! (`{"text": ...}` → ParseDocument) and `GET /v1/info` (ScorerInfo).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::embed::{Embedder, HashingEmbedder};
use crate::error::{Error, Result};
use crate::gateway::http::{HttpClient, HttpConfig};
use crate::segment::ParseDocument;

/// Text-only scalarizers served remotely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerId {
    Bert,
    Bart,
    Summ,
    LogNli,
}

impl ScorerId {
    pub const ALL: [ScorerId; 4] = [ScorerId::Bert, ScorerId::Bart, ScorerId::Summ, ScorerId::LogNli];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScorerId::Bert => "bert",
            ScorerId::Bart => "bart",
            ScorerId::Summ => "summ",
            ScorerId::LogNli => "log_nli",
        }
    }
}

impl fmt::Display for ScorerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScorerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scorer id {s:?}; expected bert, bart, summ or log_nli")))
    }
}

/// Body of `POST /v1/score`. `scorer_id` may also be `embed`, which takes no
/// reference and returns a vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub scorer_id: String,
    pub candidate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ScoreValue {
    pub fn scalar(&self) -> Result<f64> {
        match self {
            ScoreValue::Scalar(x) => Ok(*x),
            ScoreValue::Vector(_) => Err(Error::Scorer("expected a scalar score, got a vector".into())),
        }
    }

    pub fn vector(&self) -> Result<Vec<f64>> {
        match self {
            ScoreValue::Vector(v) => Ok(v.clone()),
            ScoreValue::Scalar(_) => Err(Error::Scorer("expected an embedding vector, got a scalar".into())),
        }
    }
}

/// Body returned by `POST /v1/score`. `log_nli` puts the two directional
/// entailment probabilities in `details`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub score: ScoreValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<BTreeMap<String, Value>>,
}

/// Body returned by `GET /v1/info`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerInfo {
    pub service: String,
    pub version: String,
    /// Scorer id to model checkpoint.
    pub models: BTreeMap<String, String>,
    /// Scorer id to a one-line definition of the returned value.
    pub definitions: BTreeMap<String, String>,
}

/// A scorer service.
pub trait TextScorer: Send + Sync {
    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse>;
}

/// HTTP client for the scorer service.
#[derive(Debug)]
pub struct HttpScorer {
    client: HttpClient,
}

fn scorer_error(e: Error) -> Error {
    match e {
        Error::Scorer(_) => e,
        other => Error::Scorer(other.to_string()),
    }
}

impl HttpScorer {
    pub fn new(config: HttpConfig) -> Result<Self> {
        Ok(HttpScorer {
            client: HttpClient::new(config)?,
        })
    }

    pub fn parse(&self, text: &str) -> Result<ParseDocument> {
        let v = self
            .client
            .post_json("v1/parse", &json!({ "text": text }))
            .map_err(scorer_error)?;
        serde_json::from_value(v).map_err(|e| Error::input("segmenter", format!("parse response: {e}")))
    }

    pub fn info(&self) -> Result<ScorerInfo> {
        let v = self.client.get_json("v1/info").map_err(scorer_error)?;
        serde_json::from_value(v).map_err(|e| Error::Scorer(format!("info response: {e}")))
    }
}

impl TextScorer for HttpScorer {
    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        let body = serde_json::to_value(req)?;
        let v = self.client.post_json("v1/score", &body).map_err(scorer_error)?;
        serde_json::from_value(v).map_err(|e| Error::Scorer(format!("score response: {e}")))
    }
}

/// Offline stand-in for the scorer service built on word overlap.
///
/// `bert` is the unigram F1 between candidate and reference; `bart` and
/// `summ` are the mean log of add-one smoothed reference-word recall;
/// `log_nli` is the log-odds of the geometric mean of the two directional
/// containment ratios; `embed` is a hashed bag of words.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockScorer;

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn containment(a: &[String], b: &HashSet<&str>) -> f64 {
    let hit = a.iter().filter(|w| b.contains(w.as_str())).count();
    (hit as f64 + 0.5) / (a.len() as f64 + 1.0)
}

impl TextScorer for MockScorer {
    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        if req.candidate.trim().is_empty() {
            return Err(Error::Scorer("422: candidate is empty".into()));
        }
        if req.scorer_id == "embed" {
            return Ok(ScoreResponse {
                score: ScoreValue::Vector(HashingEmbedder::new(64).embed(&req.candidate)?),
                details: None,
            });
        }
        let id: ScorerId = req
            .scorer_id
            .parse()
            .map_err(|_| Error::Scorer(format!("400: unknown scorer {:?}", req.scorer_id)))?;
        let reference = req
            .reference
            .as_deref()
            .filter(|r| !r.trim().is_empty())
            .ok_or_else(|| Error::Scorer("422: reference is empty".into()))?;
        let c = words(&req.candidate);
        let r = words(reference);
        let cs: HashSet<&str> = c.iter().map(String::as_str).collect();
        let rs: HashSet<&str> = r.iter().map(String::as_str).collect();
        let (score, details) = match id {
            ScorerId::Bert => {
                let p = c.iter().filter(|w| rs.contains(w.as_str())).count() as f64 / c.len().max(1) as f64;
                let q = r.iter().filter(|w| cs.contains(w.as_str())).count() as f64 / r.len().max(1) as f64;
                let f1 = if p + q == 0.0 { 0.0 } else { 2.0 * p * q / (p + q) };
                (f1, None)
            }
            ScorerId::Bart | ScorerId::Summ => {
                let lp: f64 = r
                    .iter()
                    .map(|w| if cs.contains(w.as_str()) { 1.0f64 } else { 0.5 }.ln())
                    .sum();
                (lp / r.len().max(1) as f64, None)
            }
            ScorerId::LogNli => {
                let fwd = containment(&r, &cs);
                let bwd = containment(&c, &rs);
                let g = (fwd * bwd).sqrt();
                let mut d = BTreeMap::new();
                d.insert("forward".to_string(), json!(fwd));
                d.insert("backward".to_string(), json!(bwd));
                ((g / (1.0 - g)).ln(), Some(d))
            }
        };
        Ok(ScoreResponse {
            score: ScoreValue::Scalar(score),
            details,
        })
    }
}
