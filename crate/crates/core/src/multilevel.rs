//! Coarse-to-fine attribution: score one level, refine the top units into
//! their finer children, re-score the mixed unit list.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, AttributorConfig, Budget, CLimeConfig, LShapConfig};
use crate::error::{Error, Result};
use crate::scalarize::Scalarizer;
use crate::scores::{normalize_scores, AttributionResult};
use crate::segment::UnitTree;
use crate::unit::{Level, Unit, UnitSet};

/// How many units may be refined per pass (`k`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineCount {
    Fixed(usize),
    /// Share of the candidate units, rounded half up, at least 1.
    Fraction(f64),
}

impl RefineCount {
    pub fn resolve(&self, candidates: usize) -> usize {
        match *self {
            RefineCount::Fixed(k) => k,
            RefineCount::Fraction(f) => ((f * candidates as f64 + 0.5).floor() as usize).max(1),
        }
    }
}

/// One level of the schedule with its attributor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStep {
    pub level: Level,
    pub attributor: AttributorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub schedule: Vec<LevelStep>,
    pub max_refine: RefineCount,
    /// Significance threshold φ on normalized scores.
    pub threshold: f64,
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::Config("level schedule is empty".into()));
        }
        for w in self.schedule.windows(2) {
            if w[0].level >= w[1].level {
                return Err(Error::Config(format!(
                    "level schedule must go from coarse to fine, got {} before {}",
                    w[0].level, w[1].level
                )));
            }
        }
        if let RefineCount::Fixed(0) = self.max_refine {
            return Err(Error::Config("refinement count k must be at least 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [-1, 1]", self.threshold)));
        }
        Ok(())
    }
}

/// Indices of the units to refine: normalized score at least `threshold` and
/// among the `k` highest, ties broken toward the earlier index.
///
/// Scores are expected in span order.
pub fn select_refinement(scores: &[f64], k: usize, threshold: f64) -> Result<Vec<usize>> {
    let psi = normalize_scores(scores)?;
    let mut order: Vec<usize> = (0..psi.len()).collect();
    order.sort_by(|&a, &b| psi[b].total_cmp(&psi[a]).then(a.cmp(&b)));
    let mut out: Vec<usize> = order.into_iter().take(k).filter(|&i| psi[i] >= threshold).collect();
    out.sort_unstable();
    Ok(out)
}

/// Scores of one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub level: Level,
    pub result: AttributionResult,
    /// Ids of the units chosen for refinement after this pass.
    pub refined: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MultilevelResult {
    /// Scores over the final mixed unit list.
    pub result: AttributionResult,
    pub unit_set: UnitSet,
    pub passes: Vec<PassRecord>,
}

fn resolve_attributor(step: &AttributorConfig, tree: &UnitTree, level: Level, d: usize) -> AttributorConfig {
    match step {
        AttributorConfig::Clime(c) if c.budget == Budget::DocumentUnits => {
            let total = tree
                .all_units()
                .iter()
                .filter(|u| u.level == level && u.of_interest)
                .count();
            AttributorConfig::Clime(CLimeConfig {
                budget: Budget::Total(total.max(d + 1)),
                ..c.clone()
            })
        }
        other => other.clone(),
    }
}

/// Runs the schedule. Later passes score the whole mixed unit list; each
/// reported score comes from the last pass that ran.
pub fn run_multilevel(tree: &UnitTree, scalarizer: &dyn Scalarizer, cfg: &RefineConfig) -> Result<MultilevelResult> {
    cfg.validate()?;
    let first = &cfg.schedule[0];
    let mut set = tree.unit_set(first.level)?;
    let mut passes: Vec<PassRecord> = Vec::new();
    let mut total_calls = 0u64;
    let mut total_evals = 0usize;
    // Units introduced by the previous pass are the refinement candidates.
    let mut candidates: BTreeSet<usize> = set.interest_units().map(|u| u.id).collect();

    for (p, step) in cfg.schedule.iter().enumerate() {
        if p > 0 {
            let prev = passes.last_mut().expect("previous pass exists");
            let idx: Vec<usize> = prev
                .result
                .unit_ids
                .iter()
                .enumerate()
                .filter(|(_, id)| candidates.contains(id))
                .map(|(i, _)| i)
                .collect();
            if idx.is_empty() {
                break;
            }
            let cand_scores: Vec<f64> = idx.iter().map(|&i| prev.result.scores[i]).collect();
            let k = cfg.max_refine.resolve(idx.len());
            let chosen: Vec<usize> = select_refinement(&cand_scores, k, cfg.threshold)?
                .into_iter()
                .map(|j| prev.result.unit_ids[idx[j]])
                .collect();
            prev.refined = chosen.clone();
            if chosen.is_empty() {
                break;
            }
            let mut units: Vec<Unit> = Vec::new();
            candidates.clear();
            for u in set.units() {
                if u.of_interest && chosen.contains(&u.id) {
                    let children = tree.children(u.id, step.level)?;
                    candidates.extend(children.iter().filter(|c| c.of_interest).map(|c| c.id));
                    units.extend(children);
                } else {
                    units.push(u.clone());
                }
            }
            set = set.with_units(units)?;
        }
        let attributor = resolve_attributor(&step.attributor, tree, step.level, set.d());
        let mut r = attribute(&attributor, &set, scalarizer)?;
        r.passes = vec![p; r.len()];
        total_calls += r.model_calls;
        total_evals += r.evaluations;
        passes.push(PassRecord {
            level: step.level,
            result: r,
            refined: Vec::new(),
        });
    }

    let last = passes.last().expect("at least one pass ran");
    let mut result = last.result.clone();
    result.model_calls = total_calls;
    result.evaluations = total_evals;
    result.algorithm = passes
        .iter()
        .map(|p| p.result.algorithm.as_str())
        .collect::<Vec<_>>()
        .join(">");
    Ok(MultilevelResult {
        result,
        unit_set: set,
        passes,
    })
}

/// Named parameter sets for the experiments the method was tuned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    SmallModelSummarization,
    LargeModelSummarization,
    Qa,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::SmallModelSummarization, Preset::LargeModelSummarization, Preset::Qa];

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::SmallModelSummarization => "small-model-summarization",
            Preset::LargeModelSummarization => "large-model-summarization",
            Preset::Qa => "qa",
        }
    }

    /// Parameters for the given algorithm name (`loo`, `clime` or `lshap`).
    pub fn config(&self, algorithm: &str, seed: u64) -> Result<RefineConfig> {
        let clime = |k: usize, budget: Budget| {
            AttributorConfig::Clime(CLimeConfig {
                budget,
                max_simultaneous: k,
                include_intercept: true,
                seed,
            })
        };
        let lshap = |m: usize, k: usize| {
            AttributorConfig::Lshap(LShapConfig {
                radius: m,
                max_neighbors_perturbed: k,
                seed,
            })
        };
        let step = |level, attributor| LevelStep { level, attributor };
        if !matches!(algorithm, "loo" | "clime" | "lshap") {
            return Err(Error::Config(format!(
                "unknown algorithm {algorithm:?}; expected loo, clime or lshap"
            )));
        }
        Ok(match self {
            Preset::SmallModelSummarization => {
                let (a, threshold) = match algorithm {
                    "loo" => (AttributorConfig::Loo, 1.0 / 3.0),
                    "clime" => (clime(3, Budget::Ratio(10.0)), 1.0 / 3.0),
                    _ => (lshap(2, 2), 0.3),
                };
                RefineConfig {
                    schedule: vec![step(Level::Sentence, a.clone()), step(Level::Phrase, a)],
                    max_refine: RefineCount::Fixed(3),
                    threshold,
                }
            }
            Preset::LargeModelSummarization => {
                let fine = match algorithm {
                    "loo" => AttributorConfig::Loo,
                    "clime" => clime(2, Budget::DocumentUnits),
                    _ => lshap(1, 2),
                };
                RefineConfig {
                    schedule: vec![step(Level::Sentence, AttributorConfig::Loo), step(Level::Phrase, fine)],
                    max_refine: RefineCount::Fraction(0.25),
                    threshold: -1.0,
                }
            }
            Preset::Qa => {
                let (coarse, fine) = match algorithm {
                    "loo" => (AttributorConfig::Loo, AttributorConfig::Loo),
                    "clime" => (clime(2, Budget::Ratio(10.0)), clime(3, Budget::Ratio(10.0))),
                    _ => (lshap(2, 2), lshap(2, 2)),
                };
                RefineConfig {
                    schedule: vec![step(Level::Sentence, coarse), step(Level::Word, fine)],
                    max_refine: RefineCount::Fixed(1),
                    threshold: -1.0,
                }
            }
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset {s:?}; expected small-model-summarization, large-model-summarization or qa"
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        assert_eq!(select_refinement(&[0.9, 0.1, -0.5], 2, 0.0).unwrap(), vec![0]);
    }

    #[test]
    fn vacuous_threshold_picks_argmax() {
        assert_eq!(select_refinement(&[0.2, 0.7, 0.7, -1.0], 1, -1.0).unwrap(), vec![1]);
    }

    #[test]
    fn constant_scores_select_nothing_above_zero() {
        assert!(select_refinement(&[4.0, 4.0, 4.0], 3, 0.1).unwrap().is_empty());
        assert_eq!(select_refinement(&[4.0, 4.0, 4.0], 2, 0.0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn fraction_rounds_half_up_with_floor() {
        assert_eq!(RefineCount::Fraction(0.25).resolve(2), 1);
        assert_eq!(RefineCount::Fraction(0.25).resolve(6), 2);
        assert_eq!(RefineCount::Fraction(0.25).resolve(10), 3);
        assert_eq!(RefineCount::Fraction(0.25).resolve(1), 1);
    }

    #[test]
    fn schedule_must_get_finer() {
        let cfg = RefineConfig {
            schedule: vec![
                LevelStep {
                    level: Level::Word,
                    attributor: AttributorConfig::Loo,
                },
                LevelStep {
                    level: Level::Sentence,
                    attributor: AttributorConfig::Loo,
                },
            ],
            max_refine: RefineCount::Fixed(1),
            threshold: 0.0,
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.as_str().parse::<Preset>().unwrap(), p);
        }
        assert!("tiny".parse::<Preset>().is_err());
    }
}
