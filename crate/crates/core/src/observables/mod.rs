//! Classical observables, their smeared symbols, coherent-state matrix
//! elements and the classical limit.

mod expr;
mod forcing;
mod parse;
mod smear;

pub use expr::{ClassicalExpr, Coord, FunctionRegistry, GrowthBound, LinearForm, OpaqueFn};
pub use forcing::ForcingProfile;
pub use parse::parse_expr;
#[allow(unused_imports)]
pub(crate) use smear::add_coherent_exponent;
pub use smear::{
    classical_eval, classical_sweep, expectation_vector, matrix_element, matrix_element_sum, matrix_element_weight,
    smear_kernel, smear_sum, LimitRow, LimitSweep, OPAQUE_TOL,
};

use crate::gaussian::GaussianError;
use crate::states::StateError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObservableError {
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("expression contains opaque function '{0}' and has no closed form")]
    NotInClass(String),
    #[error("opaque function '{0}' grows faster than exponentially")]
    GrowthRejected(String),
    #[error("observable is singular at q = {q:?}, p = {p:?}")]
    Singular { q: Vec<f64>, p: Vec<f64> },
    #[error("smearing of {0} diverges")]
    Divergent(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// Parses with the default function registry.
pub fn expr(src: &str) -> Result<ClassicalExpr, ObservableError> {
    parse_expr(src, &FunctionRegistry::default())
}
