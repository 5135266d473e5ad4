//! Numerical evidence: assumption checks, Itô residuals, convergence studies
//! and distributional comparisons.

use thiserror::Error;

use crate::solver::SolverError;
use crate::transform::TransformError;

pub mod check;
pub mod convergence;
pub mod ito;
pub mod stats;

pub use check::{
    build_transform, check_assumptions, CheckOptions, CheckReport, Clause, TransformSpec, TransformSummary,
};
pub use convergence::{convergence_study, ols, ConvergenceReport, LevelResult, StudyConfig};
pub use ito::{ito_residual, ito_residual_with, GComponent, GInverseComponent, Quadratic, SmoothFunction};
pub use stats::{
    correlation, distribution_compare, ks_critical_value, ks_statistic, poisson_count_gof, KsComparison, PoissonGof,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("component {component} out of range for dimension {dimension}")]
    ComponentOutOfRange { component: usize, dimension: usize },
    #[error("empty sample")]
    EmptySample,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}
