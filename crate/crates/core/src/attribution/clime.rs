use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{binomial, finish, require_units, MaskEvaluator};
use crate::error::{Error, Result};
use crate::scalarize::Scalarizer;
use crate::scores::AttributionResult;
use crate::unit::{PerturbationMask, UnitSet};

/// Number of perturbations `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// `n = ceil(ratio * d)`.
    Ratio(f64),
    /// Fixed `n`.
    Total(usize),
    /// `n` = number of units at the current level in the whole document, but
    /// never below `d + 1`. Resolved by the multilevel runner.
    DocumentUnits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CLimeConfig {
    pub budget: Budget,
    /// Most units dropped in one perturbation (`K`).
    pub max_simultaneous: usize,
    pub include_intercept: bool,
    pub seed: u64,
}

impl Default for CLimeConfig {
    fn default() -> Self {
        CLimeConfig {
            budget: Budget::Ratio(10.0),
            max_simultaneous: 3,
            include_intercept: true,
            seed: 0,
        }
    }
}

impl CLimeConfig {
    /// Requested `n` before truncation to the sample space.
    pub fn resolved_budget(&self, d: usize) -> usize {
        match self.budget {
            Budget::Ratio(r) => (r * d as f64).ceil() as usize,
            Budget::Total(n) => n,
            Budget::DocumentUnits => d + 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Budget::Ratio(r) = self.budget {
            if !(r >= 1.0) {
                return Err(Error::Config(format!("budget ratio must be at least 1, got {r}")));
            }
        }
        if self.max_simultaneous == 0 {
            return Err(Error::Config("max_simultaneous must be at least 1".into()));
        }
        Ok(())
    }
}

/// Number of masks dropping at most `k` of `d` units.
pub fn sample_space_size(d: usize, k: usize) -> usize {
    (0..=k.min(d)).map(|j| binomial(d, j) as usize).sum()
}

/// Unranks the `rank`-th `k`-subset of `0..d` in lexicographic order.
fn unrank_combination(d: usize, k: usize, mut rank: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        let remaining = k - slot;
        let mut c = next;
        loop {
            let count = binomial(d - c - 1, remaining - 1) as usize;
            if rank < count {
                break;
            }
            rank -= count;
            c += 1;
        }
        out.push(c);
        next = c + 1;
    }
    out
}

const ENUMERATE_LIMIT: usize = 1 << 14;

/// Draws distinct `j`-subsets of `0..d` uniformly without replacement.
struct CardinalityPool {
    d: usize,
    j: usize,
    capacity: usize,
    drawn: usize,
    /// Pre-shuffled ranks when the class is small enough to enumerate.
    order: Option<Vec<usize>>,
    used: BTreeSet<Vec<usize>>,
}

impl CardinalityPool {
    fn new(d: usize, j: usize) -> Self {
        CardinalityPool {
            d,
            j,
            capacity: binomial(d, j) as usize,
            drawn: 0,
            order: None,
            used: BTreeSet::new(),
        }
    }

    fn remaining(&self) -> usize {
        self.capacity - self.drawn
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if self.capacity <= ENUMERATE_LIMIT {
            let order = self.order.get_or_insert_with(|| {
                let mut v: Vec<usize> = (0..self.capacity).collect();
                v.shuffle(rng);
                v
            });
            let s = unrank_combination(self.d, self.j, order[self.drawn]);
            self.drawn += 1;
            return s;
        }
        loop {
            let mut s = sample(rng, self.d, self.j).into_vec();
            s.sort_unstable();
            if self.used.insert(s.clone()) {
                self.drawn += 1;
                return s;
            }
        }
    }
}

/// Masks for a C-LIME fit with their sample weights.
///
/// The identity mask and all `d` single-drop masks come first; the rest of the
/// budget is filled with distinct random masks dropping 2 to `K` units, the
/// drop count chosen uniformly among counts that still have unused masks.
/// Every drop-count class carries total weight 1, split evenly.
pub fn sample_perturbations(d: usize, cfg: &CLimeConfig) -> Result<Vec<(PerturbationMask, f64)>> {
    cfg.validate()?;
    if d == 0 {
        return Err(Error::contract("attributors", "no units of interest to attribute"));
    }
    let k = cfg.max_simultaneous.min(d);
    let requested = cfg.resolved_budget(d);
    if requested < d + 1 {
        return Err(Error::InsufficientBudget {
            budget: requested,
            units: d,
        });
    }
    let n = requested.min(sample_space_size(d, k));
    let mut dropped: Vec<Vec<usize>> = Vec::with_capacity(n);
    dropped.push(Vec::new());
    dropped.extend((0..d).map(|s| vec![s]));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pools: Vec<CardinalityPool> = (2..=k).map(|j| CardinalityPool::new(d, j)).collect();
    while dropped.len() < n {
        let open: Vec<usize> = (0..pools.len()).filter(|&i| pools[i].remaining() > 0).collect();
        let pick = open[rng.random_range(0..open.len())];
        dropped.push(pools[pick].draw(&mut rng));
    }

    let mut class_sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for s in &dropped {
        *class_sizes.entry(s.len()).or_default() += 1;
    }
    Ok(dropped
        .into_iter()
        .map(|s| {
            let w = 1.0 / class_sizes[&s.len()] as f64;
            (PerturbationMask::dropping(d, s), w)
        })
        .collect())
}

/// Weighted least-squares fit of scores on masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CLimeFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Weighted residual sum of squares.
    pub residual: f64,
}

/// Solves `min sum_i w_i (y_i - b - z_i . xi)^2` by QR, after an SVD rank check.
pub fn clime_fit(samples: &[(PerturbationMask, f64)], y: &[f64], include_intercept: bool) -> Result<CLimeFit> {
    if samples.len() != y.len() || samples.is_empty() {
        return Err(Error::contract(
            "attributors",
            format!("{} samples but {} scores", samples.len(), y.len()),
        ));
    }
    let d = samples[0].0.len();
    let off = usize::from(include_intercept);
    let cols = d + off;
    let n = samples.len();
    let mut x = DMatrix::<f64>::zeros(n, cols);
    let mut b = DVector::<f64>::zeros(n);
    for (i, ((mask, w), yi)) in samples.iter().zip(y).enumerate() {
        let sw = w.sqrt();
        if include_intercept {
            x[(i, 0)] = sw;
        }
        for (j, &kept) in mask.bits().iter().enumerate() {
            if kept {
                x[(i, j + off)] = sw;
            }
        }
        b[i] = sw * yi;
    }
    let singular = x.clone().singular_values();
    let smax = singular.max();
    let tol = smax * (n.max(cols) as f64) * f64::EPSILON;
    let rank = singular.iter().filter(|&&s| s > tol).count();
    if rank < cols {
        return Err(Error::RankDeficient(format!(
            "design has {n} masks over {d} units{}, rank {rank} of {cols}",
            if include_intercept { " plus intercept" } else { "" }
        )));
    }
    // The SVD solve drifts by ~1e-5 on tall designs; Householder QR does not.
    let qr = x.clone().qr();
    let qtb = qr.q().transpose() * &b;
    let beta = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let resid = &x * &beta - &b;
    let intercept = if include_intercept { beta[0] } else { 0.0 };
    Ok(CLimeFit {
        coefficients: beta.iter().skip(off).copied().collect(),
        intercept,
        residual: resid.norm_squared(),
    })
}

/// C-LIME attribution: sampled perturbations and an unregularized weighted fit.
pub fn clime(
    unit_set: &UnitSet,
    scalarizer: &dyn Scalarizer,
    cfg: &CLimeConfig,
) -> Result<(AttributionResult, CLimeFit)> {
    let d = require_units(unit_set)?;
    let before = scalarizer.ledger().model_calls();
    let samples = sample_perturbations(d, cfg)?;
    let masks: Vec<PerturbationMask> = samples.iter().map(|(m, _)| m.clone()).collect();
    let mut ev = MaskEvaluator::new(unit_set, scalarizer);
    let y = ev.evaluate(&masks)?;
    let fit = clime_fit(&samples, &y, cfg.include_intercept)?;
    let r = finish(unit_set, scalarizer, "clime", fit.coefficients.clone(), before, ev.evaluations())?;
    Ok((r, fit))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::marker_setup;
    use super::*;

    fn cfg(ratio: f64, k: usize, seed: u64) -> CLimeConfig {
        CLimeConfig {
            budget: Budget::Ratio(ratio),
            max_simultaneous: k,
            include_intercept: true,
            seed,
        }
    }

    #[test]
    fn unranking_is_lexicographic() {
        let all: Vec<Vec<usize>> = (0..10).map(|r| unrank_combination(5, 3, r)).collect();
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[1], vec![0, 1, 3]);
        assert_eq!(all[9], vec![2, 3, 4]);
        let set: BTreeSet<_> = all.into_iter().collect();
        assert_eq!(set.len(), 10);
    }

    #[test]
    fn small_space_is_exhausted() {
        let s = sample_perturbations(2, &cfg(10.0, 2, 1)).unwrap();
        assert_eq!(s.len(), 4);
        let s3 = sample_perturbations(3, &cfg(10.0, 3, 1)).unwrap();
        assert_eq!(s3.len(), 8);
        let masks: BTreeSet<_> = s3.iter().map(|(m, _)| m.clone()).collect();
        assert_eq!(masks.len(), 8);
    }

    #[test]
    fn layout_and_weights() {
        let d = 12;
        let s = sample_perturbations(d, &cfg(10.0, 3, 7)).unwrap();
        assert_eq!(s.len(), 120);
        assert_eq!(s[0].0, PerturbationMask::ones(d));
        for i in 0..d {
            assert_eq!(s[i + 1].0, PerturbationMask::dropping(d, [i]));
        }
        let mut totals: BTreeMap<usize, f64> = BTreeMap::new();
        for (m, w) in &s {
            assert!(*w > 0.0);
            assert!(m.dropped_count() <= 3);
            *totals.entry(m.dropped_count()).or_default() += w;
        }
        for t in totals.values() {
            assert!((t - 1.0).abs() < 1e-12);
        }
        let distinct: BTreeSet<_> = s.iter().map(|(m, _)| m.clone()).collect();
        assert_eq!(distinct.len(), s.len());
        assert_eq!(s, sample_perturbations(d, &cfg(10.0, 3, 7)).unwrap());
        assert_ne!(s, sample_perturbations(d, &cfg(10.0, 3, 8)).unwrap());
    }

    #[test]
    fn budget_below_d_plus_one_fails() {
        let c = CLimeConfig {
            budget: Budget::Total(4),
            ..cfg(10.0, 3, 0)
        };
        assert!(matches!(
            sample_perturbations(4, &c),
            Err(Error::InsufficientBudget { budget: 4, units: 4 })
        ));
    }

    #[test]
    fn exact_linear_recovery() {
        let (set, scal) = marker_setup(3, |z| {
            5.0 + [3.0, 1.0, 0.0].iter().zip(z).filter(|(_, p)| **p).map(|(w, _)| w).sum::<f64>()
        });
        let (r, fit) = clime(&set, &scal, &cfg(10.0, 3, 3)).unwrap();
        for (got, want) in r.scores.iter().zip([3.0, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!((fit.intercept - 5.0).abs() < 1e-9);
        assert!(fit.residual < 1e-18);
        assert_eq!(r.model_calls, 8);
    }

    #[test]
    fn constant_scalarizer_gives_zero() {
        let (set, scal) = marker_setup(5, |_| 2.5);
        let (r, _) = clime(&set, &scal, &cfg(5.0, 2, 0)).unwrap();
        assert!(r.scores.iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn large_class_uses_rejection_sampling() {
        let d = 200;
        let s = sample_perturbations(d, &cfg(2.0, 3, 11)).unwrap();
        assert_eq!(s.len(), 400);
        let distinct: BTreeSet<_> = s.iter().map(|(m, _)| m.clone()).collect();
        assert_eq!(distinct.len(), 400);
    }

    #[test]
    fn fit_is_exact_on_tall_designs() {
        let d = 13;
        let s = sample_perturbations(d, &cfg(10.0, 3, 72)).unwrap();
        let w: Vec<f64> = (0..d).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = s
            .iter()
            .map(|(m, _)| 0.3 + m.bits().iter().zip(&w).filter(|(k, _)| **k).map(|(_, w)| w).sum::<f64>())
            .collect();
        let f = clime_fit(&s, &y, true).unwrap();
        for (a, b) in f.coefficients.iter().zip(&w) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((f.intercept - 0.3).abs() < 1e-12);
    }
}
