use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::MaskEvaluator;
use crate::error::{Error, Result};
use crate::scalarize::Scalarizer;
use crate::scores::AttributionResult;
use crate::unit::{PerturbationMask, UnitSet};

/// Token fraction up to which curves are built and integrated.
pub const DEFAULT_CUTOFF: f64 = 0.20;

/// Scalarizer drop against the fraction of tokens removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    /// `(fraction removed, S(x) - S(x without the top units))`.
    pub points: Vec<(f64, f64)>,
    pub scalarizer: String,
    /// Unit ids in removal order, as far as the curve goes.
    pub removal_order: Vec<usize>,
}

/// Unit positions by decreasing score per token; ties keep span order.
pub fn removal_ranking(scores: &[f64], token_counts: &[usize]) -> Result<Vec<usize>> {
    if scores.len() != token_counts.len() {
        return Err(Error::contract(
            "evaluator",
            format!("{} scores for {} units", scores.len(), token_counts.len()),
        ));
    }
    if let Some(i) = token_counts.iter().position(|&t| t == 0) {
        return Err(Error::contract("evaluator", format!("unit at position {i} has no tokens")));
    }
    let density: Vec<f64> = scores.iter().zip(token_counts).map(|(s, &t)| s / t as f64).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| density[b].total_cmp(&density[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Removes units cumulatively in ranking order until at least `cutoff` of
/// the tokens are gone, scoring each step with `eval`.
pub fn perturbation_curve(
    result: &AttributionResult,
    unit_set: &UnitSet,
    eval: &dyn Scalarizer,
    cutoff: f64,
) -> Result<PerturbationCurve> {
    let units: Vec<_> = unit_set.interest_units().collect();
    let ids: Vec<usize> = units.iter().map(|u| u.id).collect();
    if ids != result.unit_ids {
        return Err(Error::contract(
            "evaluator",
            "attribution unit ids do not match the unit set's units of interest",
        ));
    }
    let tokens: Vec<usize> = units.iter().map(|u| u.token_count).collect();
    let order = removal_ranking(&result.scores, &tokens)?;
    let total: usize = tokens.iter().sum();
    let d = units.len();

    let mut masks = vec![PerturbationMask::ones(d)];
    let mut fractions = Vec::new();
    let mut removed = 0usize;
    for j in 0..d {
        removed += tokens[order[j]];
        masks.push(PerturbationMask::dropping(d, order[..=j].iter().copied()));
        let frac = removed as f64 / total as f64;
        fractions.push(frac);
        if frac >= cutoff {
            break;
        }
    }
    let mut ev = MaskEvaluator::new(unit_set, eval);
    let vals = ev.evaluate(&masks)?;
    let points = fractions
        .iter()
        .enumerate()
        .map(|(j, &f)| (f, vals[0] - vals[j + 1]))
        .collect();
    Ok(PerturbationCurve {
        points,
        scalarizer: eval.id(),
        removal_order: order[..fractions.len()].iter().map(|&i| ids[i]).collect(),
    })
}

/// Value of the curve at `x`: starts from (0, 0), interpolates linearly and
/// holds the last value past the final point.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let mut prev = (0.0, 0.0);
    for &p in points {
        if x <= p.0 {
            if p.0 == prev.0 {
                return p.1;
            }
            return prev.1 + (p.1 - prev.1) * (x - prev.0) / (p.0 - prev.0);
        }
        prev = p;
    }
    prev.1
}

/// Trapezoidal area under the curve on `[0, cutoff]`, scaled by `100 / cutoff`.
pub fn aupc(curve: &PerturbationCurve, cutoff: f64) -> f64 {
    aupc_points(&curve.points, cutoff)
}

pub fn aupc_points(points: &[(f64, f64)], cutoff: f64) -> f64 {
    let mut area = 0.0;
    let mut prev = (0.0, 0.0);
    for &p in points {
        if prev.0 >= cutoff {
            break;
        }
        if p.0 > cutoff {
            let y = interpolate(&[prev, p], cutoff);
            area += 0.5 * (prev.1 + y) * (cutoff - prev.0);
            prev = (cutoff, y);
            break;
        }
        area += 0.5 * (prev.1 + p.1) * (p.0 - prev.0);
        prev = p;
    }
    if prev.0 < cutoff {
        area += prev.1 * (cutoff - prev.0);
    }
    area * 100.0 / cutoff
}

/// Mean and standard error of curves on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_examples: usize,
}

/// Evenly spaced grid from 0 to `cutoff` with `steps` intervals.
pub fn default_grid(cutoff: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| cutoff * i as f64 / steps as f64).collect()
}

/// Interpolates each curve onto `grid` and reports the mean and the standard
/// error of the mean (sample standard deviation over `sqrt(n)`).
pub fn average_curves(curves: &[PerturbationCurve], grid: &[f64]) -> Result<AggregateCurve> {
    if curves.is_empty() {
        return Err(Error::contract("evaluator", "no curves to average"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract("evaluator", "grid must be strictly increasing"));
    }
    let n = curves.len();
    let mut mean = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    for &x in grid {
        let ys: Vec<f64> = curves.iter().map(|c| interpolate(&c.points, x)).collect();
        let m = ys.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        stderr.push(se);
    }
    Ok(AggregateCurve {
        grid: grid.to_vec(),
        mean,
        stderr,
        n_examples: n,
    })
}

/// Scores from a uniformly random ranking, for the baseline row.
pub fn random_ranking(unit_set: &UnitSet, seed: u64) -> Result<AttributionResult> {
    let units: Vec<_> = unit_set.interest_units().collect();
    let d = units.len();
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut scores = vec![0.0; d];
    for (pos, &i) in perm.iter().enumerate() {
        scores[i] = (d - pos) as f64;
    }
    AttributionResult::new(
        units.iter().map(|u| u.id).collect(),
        scores,
        units.iter().map(|u| u.level).collect(),
        "random",
        "none",
        String::new(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: Vec<(f64, f64)>) -> PerturbationCurve {
        PerturbationCurve {
            points,
            scalarizer: "t".into(),
            removal_order: vec![],
        }
    }

    #[test]
    fn single_point_at_cutoff() {
        let a = aupc(&curve(vec![(0.2, 1.0)]), 0.2);
        assert!((a - 50.0).abs() < 1e-12);
    }

    #[test]
    fn zero_curve() {
        assert_eq!(aupc(&curve(vec![(0.1, 0.0), (0.25, 0.0)]), 0.2), 0.0);
        assert_eq!(aupc(&curve(vec![]), 0.2), 0.0);
    }

    #[test]
    fn hold_and_crossing() {
        // (0,0)-(0.1,2): area 0.1; hold 2 to 0.2: area 0.2; total 0.3 -> 150.
        assert!((aupc(&curve(vec![(0.1, 2.0)]), 0.2) - 150.0).abs() < 1e-12);
        // (0,0)-(0.1,1)-(0.3,3) crossing at 0.2 with value 2.
        // 0.05 + 0.5*(1+2)*0.1 = 0.2 -> 100.
        assert!((aupc(&curve(vec![(0.1, 1.0), (0.3, 3.0)]), 0.2) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_rules() {
        assert_eq!(removal_ranking(&[1.0, 1.0], &[1, 4]).unwrap(), vec![0, 1]);
        assert_eq!(removal_ranking(&[1.0, 1.0], &[4, 1]).unwrap(), vec![1, 0]);
        assert_eq!(removal_ranking(&[0.0, 0.0, 0.0], &[1, 2, 3]).unwrap(), vec![0, 1, 2]);
        assert!(removal_ranking(&[1.0], &[0]).is_err());
    }

    #[test]
    fn averaging_example() {
        let a = curve(vec![(0.1, 1.0), (0.2, 2.0)]);
        let b = curve(vec![(0.1, 3.0), (0.2, 4.0)]);
        let agg = average_curves(&[a.clone(), b], &[0.1, 0.2]).unwrap();
        assert_eq!(agg.mean, vec![2.0, 3.0]);
        for s in agg.stderr {
            assert!((s - 1.0).abs() < 1e-12);
        }
        let one = average_curves(&[a.clone(), a], &[0.05, 0.1]).unwrap();
        assert_eq!(one.mean, vec![0.5, 1.0]);
        assert_eq!(one.stderr, vec![0.0, 0.0]);
    }
}
