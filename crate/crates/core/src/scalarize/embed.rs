use std::sync::Arc;

use serde_json::{json, Value};

use super::scorer::{ScoreRequest, TextScorer};
use crate::error::{Error, Result};
use crate::gateway::http::{HttpClient, HttpConfig};

/// Text to dense vector.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Cosine similarity. A zero vector has similarity 0 with everything.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract(
            "scalarizer",
            format!("embedding lengths differ: {} vs {}", a.len(), b.len()),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>();
    let nb = b.iter().map(|x| x * x).sum::<f64>();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Bag-of-words feature hashing; deterministic and offline.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        HashingEmbedder { dim: dim.max(1) }
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        for w in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let h = fnv1a(&w.to_lowercase());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        Ok(v)
    }
}

/// OpenAI-compatible `embeddings` route.
#[derive(Debug)]
pub struct HttpEmbedder {
    client: HttpClient,
    model: String,
}

impl HttpEmbedder {
    pub fn new(config: HttpConfig, model: impl Into<String>) -> Result<Self> {
        Ok(HttpEmbedder {
            client: HttpClient::new(config)?,
            model: model.into(),
        })
    }
}

fn number_array(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(Value::as_f64).collect()
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let v = self
            .client
            .post_json("embeddings", &json!({"model": self.model, "input": text}))?;
        v.pointer("/data/0/embedding")
            .and_then(number_array)
            .ok_or_else(|| Error::Remote {
                status: 200,
                body: "embeddings response lacks data[0].embedding".into(),
            })
    }
}

/// Embeddings from the scorer service's `embed` scorer.
pub struct SidecarEmbedder {
    scorer: Arc<dyn TextScorer>,
}

impl SidecarEmbedder {
    pub fn new(scorer: Arc<dyn TextScorer>) -> Self {
        SidecarEmbedder { scorer }
    }
}

impl Embedder for SidecarEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.trim().is_empty() {
            return Ok(Vec::new());
        }
        let resp = self.scorer.score(&ScoreRequest {
            scorer_id: "embed".into(),
            candidate: text.to_string(),
            reference: None,
        })?;
        resp.score.vector()
    }
}
