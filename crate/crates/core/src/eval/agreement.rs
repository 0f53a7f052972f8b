use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::AttributionResult;

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract(
            "evaluator",
            format!("cannot correlate vectors of length {} and {}", a.len(), b.len()),
        ));
    }
    if a.len() < 2 {
        return Err(Error::contract("evaluator", "rank correlation needs at least two units"));
    }
    pearson(&average_ranks(a), &average_ranks(b))
        .ok_or_else(|| Error::contract("evaluator", "rank correlation is undefined for a constant vector"))
}

/// Spearman between two results over the same units.
pub fn spearman_results(a: &AttributionResult, b: &AttributionResult) -> Result<f64> {
    check_aligned(a, b)?;
    spearman(&a.scores, &b.scores)
}

pub(crate) fn check_aligned(a: &AttributionResult, b: &AttributionResult) -> Result<()> {
    if a.unit_ids != b.unit_ids || a.levels != b.levels {
        return Err(Error::contract(
            "evaluator",
            format!(
                "results {}/{} and {}/{} are not over the same units",
                a.algorithm, a.scalarizer, b.algorithm, b.scalarizer
            ),
        ));
    }
    Ok(())
}

/// Mean cosine similarity over examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineAgreement {
    /// `None` when every example was skipped.
    pub mean: Option<f64>,
    pub n_used: usize,
    /// Examples skipped because one of the vectors is zero.
    pub n_skipped: usize,
}

/// Averages `<a, b> / (|a| |b|)` over example pairs; pairs with a zero
/// vector are skipped and counted.
pub fn cosine_agreement(pairs: &[(&[f64], &[f64])]) -> Result<CosineAgreement> {
    let mut sum = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for (i, (a, b)) in pairs.iter().enumerate() {
        if a.len() != b.len() {
            return Err(Error::contract(
                "evaluator",
                format!("example {i}: vectors of length {} and {}", a.len(), b.len()),
            ));
        }
        let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum();
        let nb: f64 = b.iter().map(|x| x * x).sum();
        if na == 0.0 || nb == 0.0 {
            skipped += 1;
            continue;
        }
        sum += (dot / (na * nb).sqrt()).clamp(-1.0, 1.0);
        used += 1;
    }
    Ok(CosineAgreement {
        mean: (used > 0).then(|| sum / used as f64),
        n_used: used,
        n_skipped: skipped,
    })
}
