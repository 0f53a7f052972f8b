use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{binomial, finish, require_units, subsets_up_to, MaskEvaluator};
use crate::error::{Error, Result};
use crate::scalarize::Scalarizer;
use crate::scores::AttributionResult;
use crate::unit::{PerturbationMask, UnitSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LShapConfig {
    /// Neighborhood radius `M`.
    pub radius: usize,
    /// Most neighbors dropped together with the unit (`K`).
    pub max_neighbors_perturbed: usize,
    /// Unused by the enumeration; kept for provenance.
    pub seed: u64,
}

impl Default for LShapConfig {
    fn default() -> Self {
        LShapConfig {
            radius: 2,
            max_neighbors_perturbed: 2,
            seed: 0,
        }
    }
}

/// Units within distance `radius` of `s`, excluding `s`, clipped to `0..d`.
pub fn neighborhood(s: usize, d: usize, radius: usize) -> Vec<usize> {
    let lo = s.saturating_sub(radius);
    let hi = (s + radius).min(d - 1);
    (lo..=hi).filter(|&t| t != s).collect()
}

/// `d * sum_{j<=K} C(2M, j) + 1`.
pub fn lshap_budget_bound(d: usize, cfg: &LShapConfig) -> usize {
    let per: usize = (0..=cfg.max_neighbors_perturbed)
        .map(|j| binomial(2 * cfg.radius, j) as usize)
        .sum();
    d * per + 1
}

struct Term {
    unit: usize,
    weight: f64,
    without: PerturbationMask,
    with: PerturbationMask,
}

fn terms(d: usize, cfg: &LShapConfig) -> Vec<Term> {
    let mut out = Vec::new();
    for s in 0..d {
        let nb = neighborhood(s, d, cfg.radius);
        let k = cfg.max_neighbors_perturbed.min(nb.len());
        for a in subsets_up_to(&nb, k) {
            let weight = 1.0 / ((k + 1) as f64 * binomial(nb.len(), a.len()));
            let without = PerturbationMask::dropping(d, a.iter().copied());
            let with = PerturbationMask::dropping(d, a.iter().copied().chain([s]));
            out.push(Term {
                unit: s,
                weight,
                without,
                with,
            });
        }
    }
    out
}

/// Distinct masks L-SHAP evaluates for `d` units.
pub fn lshap_masks(d: usize, cfg: &LShapConfig) -> Vec<PerturbationMask> {
    let mut set = BTreeSet::new();
    for t in terms(d, cfg) {
        set.insert(t.without);
        set.insert(t.with);
    }
    set.into_iter().collect()
}

/// Local Shapley values over radius-`M` neighborhoods.
///
/// `xi_s = 1/(K'+1) sum_A C(|N|, |A|)^-1 [S(drop A) - S(drop A + s)]` over
/// `A` in the neighborhood `N` of `s` with `|A| <= K' = min(K, |N|)`.
pub fn lshap(unit_set: &UnitSet, scalarizer: &dyn Scalarizer, cfg: &LShapConfig) -> Result<AttributionResult> {
    if cfg.radius == 0 {
        return Err(Error::Config("L-SHAP radius must be at least 1".into()));
    }
    let d = require_units(unit_set)?;
    let before = scalarizer.ledger().model_calls();
    let terms = terms(d, cfg);
    let masks: Vec<PerturbationMask> = {
        let mut set = BTreeSet::new();
        for t in &terms {
            set.insert(t.without.clone());
            set.insert(t.with.clone());
        }
        set.into_iter().collect()
    };
    let mut ev = MaskEvaluator::new(unit_set, scalarizer);
    ev.evaluate(&masks)?;
    let table = ev.scores();
    let mut scores = vec![0.0; d];
    for t in &terms {
        scores[t.unit] += t.weight * (table[&t.without] - table[&t.with]);
    }
    finish(unit_set, scalarizer, "lshap", scores, before, ev.evaluations())
}
