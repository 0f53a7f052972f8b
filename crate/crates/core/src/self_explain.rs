//! Self-explanation baseline: ask the model to rank its own input units.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gateway::Gateway;
use crate::scores::AttributionResult;
use crate::unit::UnitSet;

const PROMPT_HEAD: &str = "You provided the summary below of an article, also below. The article is divided into units (sentences or phrases), which are numbered in the format: <u0> unit 0 <u1> unit 1 ... Please list the {top_k} units that were most important for you to produce this summary. List them in order from most important to least important. List only the unit numbers, for example \"<u3>, <u1>, <u4>\".";

/// Default list length: 30% of the units, rounded half up, at least 1.
pub fn default_top_k(d: usize) -> usize {
    ((0.3 * d as f64 + 0.5).floor() as usize).max(1)
}

/// Fills the ranking prompt. Units are numbered by position.
pub fn build_self_explain_prompt(units: &[&str], summary: &str, top_k: usize) -> String {
    let article = units
        .iter()
        .enumerate()
        .map(|(i, u)| format!("<u{i}> {u}"))
        .collect::<Vec<_>>()
        .join(" ");
    format!(
        "{}\n\nSummary:\n{summary}\n\nArticle:\n{article}",
        PROMPT_HEAD.replace("{top_k}", &top_k.to_string())
    )
}

/// Unit indices as ranked by the model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingExplanation {
    pub ranked_unit_ids: Vec<usize>,
    /// List elements that were not a valid, new, in-range unit number.
    pub dropped_items: usize,
}

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<u(\d+)>").unwrap());

fn parse_item(item: &str) -> Option<usize> {
    if let Some(c) = TAG.captures(item) {
        return c[1].parse().ok();
    }
    let t = item.trim().trim_matches(|c: char| matches!(c, '"' | '\'' | '.' | '[' | ']' | '(' | ')'));
    let t = t.trim();
    let inner = t
        .strip_prefix("<u")
        .and_then(|r| r.strip_suffix('>'))
        .or_else(|| t.strip_prefix('u'))
        .unwrap_or(t);
    if inner.is_empty() || !inner.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    inner.parse().ok()
}

/// Splits on commas and keeps the first occurrence of each valid unit number
/// below `d`. Anything else counts as dropped; blank elements are ignored.
pub fn parse_ranking(reply: &str, d: usize) -> RankingExplanation {
    let mut out = RankingExplanation::default();
    for item in reply.split(',') {
        if item.trim().is_empty() {
            continue;
        }
        match parse_item(item) {
            Some(i) if i < d && !out.ranked_unit_ids.contains(&i) => out.ranked_unit_ids.push(i),
            _ => out.dropped_items += 1,
        }
    }
    out
}

/// As [`parse_ranking`], truncated to `limit` entries; the surplus counts as dropped.
pub fn parse_ranking_limited(reply: &str, d: usize, limit: usize) -> RankingExplanation {
    let mut r = parse_ranking(reply, d);
    if r.ranked_unit_ids.len() > limit {
        r.dropped_items += r.ranked_unit_ids.len() - limit;
        r.ranked_unit_ids.truncate(limit);
    }
    r
}

/// Synthetic scores: `d - position` for ranked units, `-1` for the rest.
pub fn ranking_to_scores(ranking: &[usize], d: usize) -> Vec<f64> {
    let mut scores = vec![-1.0; d];
    for (p, &i) in ranking.iter().enumerate() {
        if i < d {
            scores[i] = (d - p) as f64;
        }
    }
    scores
}

/// Drops a verbatim echo of the summary so tags quoted from it are not parsed.
fn strip_echo<'a>(reply: &'a str, summary: &str) -> std::borrow::Cow<'a, str> {
    if !summary.trim().is_empty() && reply.contains(summary) {
        std::borrow::Cow::Owned(reply.replace(summary, " "))
    } else {
        std::borrow::Cow::Borrowed(reply)
    }
}

/// Outcome of one self-explanation query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfExplanation {
    pub prompt: String,
    pub reply: String,
    pub top_k: usize,
    pub ranking: RankingExplanation,
    pub result: AttributionResult,
}

/// Prompts the model with the tagged units and its own summary and turns
/// the reply into scores over the unit set's units of interest.
pub fn self_explain(
    gateway: &Gateway,
    unit_set: &UnitSet,
    summary: &str,
    top_k: Option<usize>,
) -> Result<SelfExplanation> {
    let units: Vec<_> = unit_set.interest_units().collect();
    let d = units.len();
    let top_k = top_k.unwrap_or_else(|| default_top_k(d)).max(1);
    let texts: Vec<&str> = units.iter().map(|u| unit_set.unit_text(u)).collect();
    let prompt = build_self_explain_prompt(&texts, summary, top_k);
    let before = gateway.ledger().model_calls();
    let reply = gateway.generate_with_cap(&prompt, gateway.config().ranking_max_new_tokens)?;
    let ranking = parse_ranking_limited(&strip_echo(&reply, summary), d, top_k);
    let mut result = AttributionResult::new(
        units.iter().map(|u| u.id).collect(),
        ranking_to_scores(&ranking.ranked_unit_ids, d),
        units.iter().map(|u| u.level).collect(),
        "self_explain",
        "none",
        summary,
    )?;
    result.model_calls = gateway.ledger().model_calls() - before;
    Ok(SelfExplanation {
        prompt,
        reply,
        top_k,
        ranking,
        result,
    })
}
