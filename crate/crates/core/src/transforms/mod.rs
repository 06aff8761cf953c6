//! Transformation specs, the residual functionals of both integral-equation
//! systems, and built-in examples with candidate kernels.

mod builtins;
mod kernel;
mod report;
mod residual;
mod samples;
mod spec;

pub use builtins::{
    builtin_flip, builtin_forced_oscillator, builtin_forced_oscillator_params, builtin_identity,
    builtin_repulsive_oscillator, overlap_kernel, printed_flip_kernel, repulsive_transport_rows, transport_kernel,
    Builtin,
};
pub use kernel::{overlap_sum, pull_back_first, transport_sum, FrameTag, GridKernel, KernelForm, MKernel, Row};
pub use report::{ResidualEntry, ResidualReport};
pub use residual::{
    kernel_residual, unitarity_residual, vector_residual, PathChoice, ResidualOptions, CLOSED_TOL, QUADRATURE_TOL,
};
pub use samples::{sample_pairs, SampleSet, DEFAULT_SEED};
pub use spec::{
    ClassicalMap, ForcingSpec, Relation, SpecParams, TransformationSpec, BRACKET_TOL, CHECK_POINTS, IDENTITY_TOL,
};

use crate::gaussian::GaussianError;
use crate::observables::ObservableError;
use crate::states::StateError;

#[derive(Debug, thiserror::Error)]
pub enum TransformError {
    #[error("invalid transformation spec: {0}")]
    InvalidSpec(String),
    #[error("relation {relation} fails lhs(z) = rhs(T(z)) with defect {residual:e}")]
    DefinitionalIdentity { relation: usize, residual: f64 },
    #[error("Poisson brackets of pair {pair} differ by {residual:e}")]
    Bracket { pair: usize, residual: f64 },
    #[error("kernel: {0}")]
    Kernel(String),
    #[error("kernel '{0}' is not integrable in (q', p')")]
    NotIntegrable(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[cfg(test)]
mod tests;
