//! Access to the explained model: text generation and forced-target log
//! probabilities, behind a request cache and a call ledger.

mod cache;
pub mod http;
pub mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::{Tokenizer, WhitespaceTokenizer};
use crate::unit::UnitSet;

pub use cache::RequestCache;

/// Greedy generation request. Decoding is always greedy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub input_text: String,
    pub max_new_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Log probabilities of `target_text` forced after `input_text`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForcedLogProbRequest {
    pub input_text: String,
    pub target_text: String,
}

/// Access tier of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    /// Forced-target log probabilities over the full vocabulary.
    Logprob,
    /// Generated text only.
    Text,
}

impl std::str::FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logprob" => Ok(Tier::Logprob),
            "text" => Ok(Tier::Text),
            other => Err(Error::Config(format!("unknown tier {other:?}; expected logprob or text"))),
        }
    }
}

/// A black-box language model.
pub trait LanguageModel: Send + Sync {
    /// Stable identifier, part of every cache key.
    fn name(&self) -> String;

    fn tier(&self) -> Tier;

    fn generate(&self, req: &GenerationRequest) -> Result<String>;

    /// One log probability per target token.
    fn forced_log_prob(&self, req: &ForcedLogProbRequest) -> Result<Vec<f64>>;
}

/// Snapshot of the call counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLedger {
    pub generate_calls: u64,
    pub logprob_calls: u64,
    pub cache_hits: u64,
}

impl CallLedger {
    /// Calls that reached the model.
    pub fn model_calls(&self) -> u64 {
        self.generate_calls + self.logprob_calls
    }

    pub fn since(&self, earlier: &CallLedger) -> CallLedger {
        CallLedger {
            generate_calls: self.generate_calls - earlier.generate_calls,
            logprob_calls: self.logprob_calls - earlier.logprob_calls,
            cache_hits: self.cache_hits - earlier.cache_hits,
        }
    }
}

#[derive(Debug, Default)]
struct Counters {
    generate: AtomicU64,
    logprob: AtomicU64,
    hits: AtomicU64,
}

/// Gateway settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    /// Concurrent model requests issued by attribution runs.
    pub workers: usize,
    /// Token cap when generating the target output.
    pub target_max_new_tokens: usize,
    /// Perturbed generations are capped at `ceil(ratio * tokens(target))`.
    pub perturbed_cap_ratio: f64,
    /// Token cap for self-explanation ranking replies.
    pub ranking_max_new_tokens: usize,
    pub seed: Option<u64>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            workers: 4,
            target_max_new_tokens: 256,
            perturbed_cap_ratio: 1.5,
            ranking_max_new_tokens: 500,
            seed: None,
        }
    }
}

/// Shared entry point to a model. Safe for concurrent use.
pub struct Gateway {
    model: Arc<dyn LanguageModel>,
    cache: RequestCache,
    counters: Counters,
    tokenizer: Arc<dyn Tokenizer>,
    config: GatewayConfig,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("model", &self.model.name())
            .field("config", &self.config)
            .finish()
    }
}

impl Gateway {
    pub fn new(model: Arc<dyn LanguageModel>, config: GatewayConfig) -> Self {
        Gateway {
            model,
            cache: RequestCache::in_memory(),
            counters: Counters::default(),
            tokenizer: Arc::new(WhitespaceTokenizer),
            config,
        }
    }

    pub fn with_cache(mut self, cache: RequestCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn Tokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn workers(&self) -> usize {
        self.config.workers.max(1)
    }

    pub fn tier(&self) -> Tier {
        self.model.tier()
    }

    pub fn model_name(&self) -> String {
        self.model.name()
    }

    pub fn tokenizer(&self) -> &Arc<dyn Tokenizer> {
        &self.tokenizer
    }

    pub fn ledger(&self) -> CallLedger {
        CallLedger {
            generate_calls: self.counters.generate.load(Ordering::SeqCst),
            logprob_calls: self.counters.logprob.load(Ordering::SeqCst),
            cache_hits: self.counters.hits.load(Ordering::SeqCst),
        }
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<String> {
        if req.max_new_tokens == 0 {
            return Err(Error::contract("gateway", "max_new_tokens must be at least 1"));
        }
        let key = cache::key(&self.model.name(), "generate", req)?;
        let (value, hit) = self.cache.get_or_compute(&key, || {
            self.model
                .generate(req)
                .map(serde_json::Value::String)
        })?;
        self.record(hit, &self.counters.generate);
        value
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| Error::contract("gateway", "cached generation is not a string"))
    }

    pub fn forced_log_prob(&self, req: &ForcedLogProbRequest) -> Result<Vec<f64>> {
        if self.model.tier() != Tier::Logprob {
            return Err(Error::UnsupportedTier("logprob"));
        }
        if req.target_text.is_empty() {
            return Err(Error::EmptyTarget);
        }
        let key = cache::key(&self.model.name(), "logprob", req)?;
        let (value, hit) = self.cache.get_or_compute(&key, || {
            let lp = self.model.forced_log_prob(req)?;
            Ok(serde_json::to_value(lp)?)
        })?;
        self.record(hit, &self.counters.logprob);
        Ok(serde_json::from_value(value)?)
    }

    fn record(&self, hit: bool, miss_counter: &AtomicU64) {
        if hit {
            self.counters.hits.fetch_add(1, Ordering::SeqCst);
        } else {
            miss_counter.fetch_add(1, Ordering::SeqCst);
        }
    }

    /// Generates the target output from the unperturbed input.
    pub fn target_output(&self, unit_set: &UnitSet) -> Result<String> {
        let out = self.generate(&GenerationRequest {
            input_text: unit_set.text().to_string(),
            max_new_tokens: self.config.target_max_new_tokens.max(1),
            seed: self.config.seed,
        })?;
        if out.trim().is_empty() {
            return Err(Error::EmptyTarget);
        }
        Ok(out)
    }

    /// Token cap for generations from perturbed inputs.
    pub fn perturbed_cap(&self, target: &str) -> usize {
        let tokens = self.tokenizer.count(target) as f64;
        ((self.config.perturbed_cap_ratio * tokens).ceil() as usize).max(1)
    }

    /// Generation from a perturbed input with the target-relative cap.
    pub fn generate_perturbed(&self, input: &str, target: &str) -> Result<String> {
        self.generate(&GenerationRequest {
            input_text: input.to_string(),
            max_new_tokens: self.perturbed_cap(target),
            seed: self.config.seed,
        })
    }

    /// Free-form generation with an explicit cap (used by self-explanation).
    pub fn generate_with_cap(&self, input: &str, max_new_tokens: usize) -> Result<String> {
        self.generate(&GenerationRequest {
            input_text: input.to_string(),
            max_new_tokens,
            seed: self.config.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::mock::{KeywordCopyModel, UniformModel};
    use super::*;

    fn gateway(model: impl LanguageModel + 'static) -> Gateway {
        Gateway::new(Arc::new(model), GatewayConfig::default())
    }

    #[test]
    fn repeated_request_hits_cache() {
        let gw = gateway(KeywordCopyModel::new("KEY"));
        let req = GenerationRequest {
            input_text: "S1 plain. S2 has KEY. S3 plain.".into(),
            max_new_tokens: 20,
            seed: None,
        };
        let first = gw.generate(&req).unwrap();
        assert_eq!(first, "S2 has KEY.");
        let second = gw.generate(&req).unwrap();
        assert_eq!(first, second);
        let l = gw.ledger();
        assert_eq!(l.generate_calls, 1);
        assert_eq!(l.cache_hits, 1);
    }

    #[test]
    fn uniform_log_probs() {
        let gw = gateway(UniformModel::new(4));
        let lp = gw
            .forced_log_prob(&ForcedLogProbRequest {
                input_text: "anything".into(),
                target_text: "two tokens".into(),
            })
            .unwrap();
        assert_eq!(lp, vec![0.25f64.ln(), 0.25f64.ln()]);
    }

    #[test]
    fn own_output_has_zero_log_prob() {
        let gw = gateway(KeywordCopyModel::new("KEY").with_logprobs());
        let input = "Nothing here. The KEY line. More filler.";
        let own = gw.generate_with_cap(input, 50).unwrap();
        let lp = gw
            .forced_log_prob(&ForcedLogProbRequest {
                input_text: input.into(),
                target_text: own,
            })
            .unwrap();
        assert!(lp.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn text_tier_rejects_log_probs() {
        let gw = gateway(KeywordCopyModel::new("KEY"));
        let err = gw
            .forced_log_prob(&ForcedLogProbRequest {
                input_text: "a".into(),
                target_text: "b".into(),
            })
            .unwrap_err();
        assert!(matches!(err, Error::UnsupportedTier(_)));
    }

    #[test]
    fn perturbed_cap_is_one_and_a_half_times_target() {
        let gw = gateway(UniformModel::new(2));
        assert_eq!(gw.perturbed_cap("one two three"), 5);
        assert_eq!(gw.perturbed_cap("a b c d"), 6);
        assert_eq!(gw.perturbed_cap(""), 1);
    }

    #[test]
    fn empty_target_is_an_error() {
        use crate::unit::{Document, UnitSet};
        let gw = gateway(KeywordCopyModel::new("KEY"));
        let set = UnitSet::new(Arc::new(Document::new("no marker here")), vec![], vec![]).unwrap();
        assert!(matches!(gw.target_output(&set), Err(Error::EmptyTarget)));
    }
}
