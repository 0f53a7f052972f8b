//! Faithfulness and agreement metrics.

mod agreement;
mod curve;

pub use agreement::{average_ranks, cosine_agreement, spearman, spearman_results, CosineAgreement};
pub use curve::{
    aupc, aupc_points, average_curves, default_grid, interpolate, perturbation_curve, random_ranking, removal_ranking,
    AggregateCurve, PerturbationCurve, DEFAULT_CUTOFF,
};
