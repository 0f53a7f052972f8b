use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unit::Level;

/// Maps scores affinely onto [-1, 1] so the minimum lands on -1 and the
/// maximum on 1. A constant vector maps to all zeros.
pub fn normalize_scores(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::contract("core", "cannot normalize an empty score vector"));
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) || !range.is_finite() {
        return Ok(vec![0.0; scores.len()]);
    }
    Ok(scores
        .iter()
        .map(|&s| (2.0 * (s - min) / range - 1.0).clamp(-1.0, 1.0))
        .collect())
}

/// Scores over the of-interest units of one unit set, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    /// Ids of the scored units, aligned with `scores`.
    pub unit_ids: Vec<usize>,
    pub scores: Vec<f64>,
    pub normalized: Vec<f64>,
    pub levels: Vec<Level>,
    /// Index of the refinement pass that produced each score.
    pub passes: Vec<usize>,
    pub algorithm: String,
    pub scalarizer: String,
    /// Model calls charged to this run (gateway ledger delta).
    pub model_calls: u64,
    /// Distinct masks scalarized.
    pub evaluations: usize,
    pub target_output: String,
}

impl AttributionResult {
    pub fn new(
        unit_ids: Vec<usize>,
        scores: Vec<f64>,
        levels: Vec<Level>,
        algorithm: impl Into<String>,
        scalarizer: impl Into<String>,
        target_output: impl Into<String>,
    ) -> Result<Self> {
        if unit_ids.len() != scores.len() || levels.len() != scores.len() {
            return Err(Error::contract(
                "core",
                format!(
                    "attribution vectors disagree: {} ids, {} scores, {} levels",
                    unit_ids.len(),
                    scores.len(),
                    levels.len()
                ),
            ));
        }
        let normalized = if scores.is_empty() {
            Vec::new()
        } else {
            normalize_scores(&scores)?
        };
        let passes = vec![0; scores.len()];
        Ok(AttributionResult {
            unit_ids,
            scores,
            normalized,
            levels,
            passes,
            algorithm: algorithm.into(),
            scalarizer: scalarizer.into(),
            model_calls: 0,
            evaluations: 0,
            target_output: target_output.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(normalize_scores(&[2.0, 1.0, 0.0]).unwrap(), vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn worked_example() {
        let psi = normalize_scores(&[0.9, 0.1, -0.5]).unwrap();
        // 2 * (0.1 + 0.5) / 1.4 - 1 = -1/7
        assert_eq!(psi[0], 1.0);
        assert!((psi[1] - (-1.0 / 7.0)).abs() < 1e-12);
        assert_eq!(psi[2], -1.0);
    }

    #[test]
    fn constant_vector_is_neutral() {
        assert_eq!(normalize_scores(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(normalize_scores(&[-2.5]).unwrap(), vec![0.0]);
    }

    #[test]
    fn empty_is_contract_error() {
        assert!(matches!(normalize_scores(&[]), Err(Error::Contract { .. })));
    }

    proptest! {
        #[test]
        fn positive_affine_invariance(
            xs in prop::collection::vec(-100.0f64..100.0, 1..20),
            a in 0.01f64..50.0,
            b in -100.0f64..100.0,
        ) {
            let base = normalize_scores(&xs).unwrap();
            let moved: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let other = normalize_scores(&moved).unwrap();
            let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - xs.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread > 1e-6 {
                for (p, q) in base.iter().zip(&other) {
                    prop_assert!((p - q).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn bounded_and_attains_extremes(xs in prop::collection::vec(-1e3f64..1e3, 1..30)) {
            let psi = normalize_scores(&xs).unwrap();
            prop_assert!(psi.iter().all(|p| (-1.0..=1.0).contains(p)));
            let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            if max > min {
                prop_assert!(psi.iter().any(|&p| p == 1.0));
                prop_assert!(psi.iter().any(|&p| p == -1.0));
            }
        }
    }
}
