//! Perturbation attribution over the of-interest units of a unit set.

mod clime;
mod loo;
mod lshap;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::parallel_map;
use crate::scalarize::Scalarizer;
use crate::scores::AttributionResult;
use crate::unit::{PerturbationMask, UnitSet};

pub use clime::{clime, clime_fit, sample_perturbations, sample_space_size, Budget, CLimeConfig, CLimeFit};
pub use loo::loo;
pub use lshap::{lshap, lshap_budget_bound, lshap_masks, neighborhood, LShapConfig};

/// Algorithm choice with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum AttributorConfig {
    Loo,
    Clime(CLimeConfig),
    Lshap(LShapConfig),
}

impl AttributorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AttributorConfig::Loo => "loo",
            AttributorConfig::Clime(_) => "clime",
            AttributorConfig::Lshap(_) => "lshap",
        }
    }

    /// Upper bound on distinct evaluations for `d` units.
    pub fn budget_bound(&self, d: usize) -> usize {
        match self {
            AttributorConfig::Loo => d + 1,
            AttributorConfig::Clime(c) => c.resolved_budget(d).min(sample_space_size(d, c.max_simultaneous)),
            AttributorConfig::Lshap(c) => lshap_budget_bound(d, c),
        }
    }
}

/// Runs the configured algorithm.
pub fn attribute(cfg: &AttributorConfig, unit_set: &UnitSet, scalarizer: &dyn Scalarizer) -> Result<AttributionResult> {
    match cfg {
        AttributorConfig::Loo => loo(unit_set, scalarizer),
        AttributorConfig::Clime(c) => clime(unit_set, scalarizer, c).map(|(r, _)| r),
        AttributorConfig::Lshap(c) => lshap(unit_set, scalarizer, c),
    }
}

/// Scalarizes masks once each, in parallel, and remembers the scores.
pub struct MaskEvaluator<'a> {
    unit_set: &'a UnitSet,
    scalarizer: &'a dyn Scalarizer,
    scores: BTreeMap<PerturbationMask, f64>,
}

impl<'a> MaskEvaluator<'a> {
    pub fn new(unit_set: &'a UnitSet, scalarizer: &'a dyn Scalarizer) -> Self {
        MaskEvaluator {
            unit_set,
            scalarizer,
            scores: BTreeMap::new(),
        }
    }

    /// Scores for `masks`, in order. Unseen masks are rendered and scalarized
    /// concurrently; any failure aborts the whole batch.
    pub fn evaluate(&mut self, masks: &[PerturbationMask]) -> Result<Vec<f64>> {
        let d = self.unit_set.d();
        let mut pending: Vec<&PerturbationMask> = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for m in masks {
            if m.len() != d {
                return Err(Error::contract(
                    "attributors",
                    format!("mask length {} does not match {d} units", m.len()),
                ));
            }
            if !self.scores.contains_key(m) && seen.insert(m) {
                pending.push(m);
            }
        }
        let unit_set = self.unit_set;
        let scalarizer = self.scalarizer;
        let results = parallel_map(scalarizer.max_concurrency(), &pending, |m| {
            unit_set.render(m).and_then(|text| scalarizer.score(&text))
        });
        let total = pending.len();
        let completed = results.iter().filter(|r| r.is_ok()).count();
        let mut first_err = None;
        for (m, r) in pending.into_iter().zip(results) {
            match r {
                Ok(s) if s.is_finite() => {
                    self.scores.insert(m.clone(), s);
                }
                Ok(s) => {
                    first_err.get_or_insert(Error::contract(
                        "scalarizers",
                        format!("non-finite score {s} for mask with {} dropped units", m.dropped_count()),
                    ));
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_err {
            return Err(Error::Partial {
                completed,
                total,
                source: Box::new(e),
            });
        }
        Ok(masks.iter().map(|m| self.scores[m]).collect())
    }

    /// Distinct masks scalarized so far.
    pub fn evaluations(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &BTreeMap<PerturbationMask, f64> {
        &self.scores
    }
}

pub(crate) fn require_units(unit_set: &UnitSet) -> Result<usize> {
    match unit_set.d() {
        0 => Err(Error::contract("attributors", "no units of interest to attribute")),
        d => Ok(d),
    }
}

/// Wraps scores into a result with ids, levels and ledger delta.
pub(crate) fn finish(
    unit_set: &UnitSet,
    scalarizer: &dyn Scalarizer,
    algorithm: &str,
    scores: Vec<f64>,
    calls_before: u64,
    evaluations: usize,
) -> Result<AttributionResult> {
    let units: Vec<_> = unit_set.interest_units().collect();
    let mut r = AttributionResult::new(
        units.iter().map(|u| u.id).collect(),
        scores,
        units.iter().map(|u| u.level).collect(),
        algorithm,
        scalarizer.id(),
        String::new(),
    )?;
    r.model_calls = scalarizer.ledger().model_calls() - calls_before;
    r.evaluations = evaluations;
    Ok(r)
}

/// `n choose k` as a float; exact for the sizes used here.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0f64;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// All subsets of `items` with at most `max` elements, in size then
/// lexicographic order.
pub(crate) fn subsets_up_to(items: &[usize], max: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], start: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < size - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, i + 1, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 0..=max.min(items.len()) {
        rec(items, 0, size, &mut Vec::new(), &mut out);
    }
    out
}


#[cfg(test)]
mod tests {
    use super::testutil::marker_setup;
    use super::*;
    use crate::scalarize::FnScalarizer;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(20, 3), 1140.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert_eq!(binomial(0, 0), 1.0);
    }

    #[test]
    fn subset_enumeration() {
        let s = subsets_up_to(&[4, 7, 9], 2);
        assert_eq!(
            s,
            vec![vec![], vec![4], vec![7], vec![9], vec![4, 7], vec![4, 9], vec![7, 9]]
        );
        assert_eq!(subsets_up_to(&[], 3), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn evaluator_dedupes() {
        let (set, scal) = marker_setup(3, |z| z.iter().filter(|b| **b).count() as f64);
        let mut ev = MaskEvaluator::new(&set, &scal);
        let m = PerturbationMask::dropping(3, [1]);
        let out = ev.evaluate(&[m.clone(), PerturbationMask::ones(3), m.clone()]).unwrap();
        assert_eq!(out, vec![2.0, 3.0, 2.0]);
        ev.evaluate(&[m]).unwrap();
        assert_eq!(scal.calls(), 2);
        assert_eq!(ev.evaluations(), 2);
    }

    #[test]
    fn failure_is_partial() {
        let (set, _) = marker_setup(2, |_| 0.0);
        let scal = FnScalarizer::new("nan", |x: &str| if x.contains("m0") { 1.0 } else { f64::NAN });
        let mut ev = MaskEvaluator::new(&set, &scal);
        let err = ev
            .evaluate(&[PerturbationMask::ones(2), PerturbationMask::dropping(2, [0])])
            .unwrap_err();
        match err {
            Error::Partial { total, .. } => assert_eq!(total, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
