//! Deterministic in-process models for tests and offline runs.

use std::collections::HashSet;
use std::sync::Arc;

use super::{ForcedLogProbRequest, GenerationRequest, LanguageModel, Tier};
use crate::error::{Error, Result};
use crate::segment::fallback::sentence_spans;
use crate::unit::{Document, Span};

/// Log probability given to target tokens the mock would not have produced.
pub const MISS_LOG_PROB: f64 = -4.605170185988091; // ln 0.01

/// Emits the input sentences that contain a marker string, joined by spaces.
///
/// In the logprob tier a target token scores 0 when the mock's own output for
/// the same input contains it and `ln 0.01` otherwise, so the mock's own
/// output has log probability 0.
#[derive(Debug, Clone)]
pub struct KeywordCopyModel {
    marker: String,
    tier: Tier,
}

impl KeywordCopyModel {
    pub fn new(marker: impl Into<String>) -> Self {
        KeywordCopyModel {
            marker: marker.into(),
            tier: Tier::Text,
        }
    }

    pub fn with_logprobs(mut self) -> Self {
        self.tier = Tier::Logprob;
        self
    }

    pub fn marker(&self) -> &str {
        &self.marker
    }

    fn copy(&self, input: &str) -> String {
        let doc = Document::new(input);
        sentence_spans(&doc, Span::new(0, doc.len()))
            .into_iter()
            .map(|s| doc.slice(s).trim())
            .filter(|s| s.contains(self.marker.as_str()))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn truncate_tokens(text: &str, max: usize) -> String {
    text.split_whitespace().take(max).collect::<Vec<_>>().join(" ")
}

impl LanguageModel for KeywordCopyModel {
    fn name(&self) -> String {
        format!("mock:keyword-copy:{}", self.marker)
    }

    fn tier(&self) -> Tier {
        self.tier
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        Ok(truncate_tokens(&self.copy(&req.input_text), req.max_new_tokens))
    }

    fn forced_log_prob(&self, req: &ForcedLogProbRequest) -> Result<Vec<f64>> {
        if self.tier != Tier::Logprob {
            return Err(Error::UnsupportedTier("logprob"));
        }
        let own = self.copy(&req.input_text);
        let own: HashSet<&str> = own.split_whitespace().collect();
        Ok(req
            .target_text
            .split_whitespace()
            .map(|t| if own.contains(t) { 0.0 } else { MISS_LOG_PROB })
            .collect())
    }
}

type ScoreFn = dyn Fn(&[bool]) -> f64 + Send + Sync;
type TokenFn = dyn Fn(&[bool], usize) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
enum Table {
    Score(Arc<ScoreFn>),
    Tokens(Arc<TokenFn>),
}

/// Log probabilities declared as a function of which marker words survive in
/// the input.
///
/// Marker `i` is present when it occurs as a whitespace-delimited word (with
/// surrounding punctuation ignored). `generate` returns the fixed target.
#[derive(Clone)]
pub struct AnalyticModel {
    markers: Vec<String>,
    target: String,
    table: Table,
}

impl std::fmt::Debug for AnalyticModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticModel")
            .field("markers", &self.markers)
            .finish()
    }
}

impl AnalyticModel {
    /// Every target token gets `score(presence)`, so the mean equals it.
    pub fn from_score(markers: Vec<String>, score: impl Fn(&[bool]) -> f64 + Send + Sync + 'static) -> Self {
        AnalyticModel {
            markers,
            target: "target".into(),
            table: Table::Score(Arc::new(score)),
        }
    }

    /// Per-token log probabilities; the closure receives the presence vector
    /// and the number of target tokens.
    pub fn from_tokens(
        markers: Vec<String>,
        target: impl Into<String>,
        table: impl Fn(&[bool], usize) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        AnalyticModel {
            markers,
            target: target.into(),
            table: Table::Tokens(Arc::new(table)),
        }
    }

    /// Additive table: `intercept + sum of weights of present markers`.
    pub fn additive(markers: Vec<String>, weights: Vec<f64>, intercept: f64) -> Self {
        assert_eq!(markers.len(), weights.len());
        Self::from_score(markers, move |z| {
            intercept
                + z.iter()
                    .zip(&weights)
                    .filter(|(p, _)| **p)
                    .map(|(_, w)| w)
                    .sum::<f64>()
        })
    }

    /// Markers `m0`, `m1`, ... and a text with one sentence per marker.
    pub fn numbered_markers(d: usize) -> (Vec<String>, String) {
        let markers: Vec<String> = (0..d).map(|i| format!("m{i}")).collect();
        let text = markers
            .iter()
            .map(|m| format!("Unit {m} here."))
            .collect::<Vec<_>>()
            .join(" ");
        (markers, text)
    }

    pub fn presence(&self, input: &str) -> Vec<bool> {
        let words: HashSet<&str> = input
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
            .collect();
        self.markers.iter().map(|m| words.contains(m.as_str())).collect()
    }

    pub fn target(&self) -> &str {
        &self.target
    }
}

impl LanguageModel for AnalyticModel {
    fn name(&self) -> String {
        format!("mock:analytic:{}", self.markers.join(","))
    }

    fn tier(&self) -> Tier {
        Tier::Logprob
    }

    fn generate(&self, _req: &GenerationRequest) -> Result<String> {
        Ok(self.target.clone())
    }

    fn forced_log_prob(&self, req: &ForcedLogProbRequest) -> Result<Vec<f64>> {
        let z = self.presence(&req.input_text);
        let n = req.target_text.split_whitespace().count().max(1);
        let out = match &self.table {
            Table::Score(f) => vec![f(&z); n],
            Table::Tokens(f) => f(&z, n),
        };
        if out.len() != n {
            return Err(Error::contract(
                "gateway",
                format!("analytic table returned {} values for {n} target tokens", out.len()),
            ));
        }
        Ok(out)
    }
}

/// Uniform distribution over a vocabulary of the given size.
#[derive(Debug, Clone)]
pub struct UniformModel {
    vocab: usize,
}

impl UniformModel {
    pub fn new(vocab: usize) -> Self {
        UniformModel { vocab: vocab.max(1) }
    }
}

impl LanguageModel for UniformModel {
    fn name(&self) -> String {
        format!("mock:uniform:{}", self.vocab)
    }

    fn tier(&self) -> Tier {
        Tier::Logprob
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        Ok(truncate_tokens("t0 t1 t2 t3", req.max_new_tokens))
    }

    fn forced_log_prob(&self, req: &ForcedLogProbRequest) -> Result<Vec<f64>> {
        let lp = (1.0 / self.vocab as f64).ln();
        Ok(vec![lp; req.target_text.split_whitespace().count()])
    }
}

/// Replies with a fixed string regardless of input. Text tier only.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    reply: String,
}

impl ScriptedModel {
    pub fn new(reply: impl Into<String>) -> Self {
        ScriptedModel { reply: reply.into() }
    }
}

impl LanguageModel for ScriptedModel {
    fn name(&self) -> String {
        format!("mock:scripted:{}", self.reply)
    }

    fn tier(&self) -> Tier {
        Tier::Text
    }

    fn generate(&self, _req: &GenerationRequest) -> Result<String> {
        Ok(self.reply.clone())
    }

    fn forced_log_prob(&self, _req: &ForcedLogProbRequest) -> Result<Vec<f64>> {
        Err(Error::UnsupportedTier("logprob"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(m: &dyn LanguageModel, input: &str) -> String {
        m.generate(&GenerationRequest {
            input_text: input.into(),
            max_new_tokens: 100,
            seed: None,
        })
        .unwrap()
    }

    #[test]
    fn keyword_copy_selects_marked_sentences() {
        let m = KeywordCopyModel::new("S2");
        assert_eq!(gen(&m, "S1 is here. S2 is marked. S3 is not."), "S2 is marked.");
        assert_eq!(gen(&m, "S2"), "S2");
        assert_eq!(gen(&m, "Nothing marked."), "");
    }

    #[test]
    fn keyword_copy_respects_token_cap() {
        let m = KeywordCopyModel::new("K");
        let out = m
            .generate(&GenerationRequest {
                input_text: "K one two three. K four.".into(),
                max_new_tokens: 3,
                seed: None,
            })
            .unwrap();
        assert_eq!(out, "K one two");
    }

    #[test]
    fn analytic_presence_ignores_punctuation() {
        let (markers, text) = AnalyticModel::numbered_markers(3);
        let m = AnalyticModel::additive(markers, vec![3.0, 1.0, 0.0], 5.0);
        assert_eq!(m.presence(&text), vec![true, true, true]);
        assert_eq!(m.presence("Unit m0 here. Unit m2 here."), vec![true, false, true]);
        let lp = m
            .forced_log_prob(&ForcedLogProbRequest {
                input_text: "(m1)".into(),
                target_text: "target".into(),
            })
            .unwrap();
        assert_eq!(lp, vec![6.0]);
    }

    #[test]
    fn scripted_reply() {
        assert_eq!(gen(&ScriptedModel::new("<u1>, <u0>"), "anything"), "<u1>, <u0>");
    }
}
