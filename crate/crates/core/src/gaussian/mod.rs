//! Closed-form algebra for polynomial-times-complex-Gaussian functions on `R^m`
//! and an independent Gauss–Hermite oracle.

mod exponent;
mod hermite;
mod oracle;
mod poly;
mod sum;

pub use exponent::{Exponent, ExponentBuilder};
pub use hermite::{HermiteRule, LegendreRule};
pub use oracle::{quad_oracle_checked, quad_oracle_fn, quad_oracle_sum, GaussianFrame, DEFAULT_ORDER};
pub use poly::{Monomial, Poly};
pub use sum::{AffineMap, GaussianBlock, GaussianSum, GaussianTerm, MERGE_TOL};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GaussianError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("real part of the quadratic form is not negative definite over variables {vars:?}")]
    NotIntegrable { vars: Vec<usize> },
    #[error("quadrature order {order} too small: order doubling changed the value by {difference:e}")]
    OrderTooSmall { order: usize, difference: f64 },
}
