//! Multi-level perturbation attribution for black-box text generation.

pub mod attribution;
pub mod config;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod html;
pub mod multilevel;
pub mod parallel;
pub mod pipeline;
pub mod scalarize;
pub mod scores;
pub mod segment;
pub mod self_explain;
pub mod tokenize;
pub mod unit;

pub use error::{Error, ErrorKind, Result};
pub use scores::{normalize_scores, AttributionResult};
pub use unit::{Document, Level, PerturbationMask, Span, Unit, UnitSet};
