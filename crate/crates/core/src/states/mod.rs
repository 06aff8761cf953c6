//! Coherent vectors, kernel states, the Fock-type space and the group action.
//!
//! Profiles over `R^{2n}` order their variables as `[x_1..x_n, y_1..y_n]`;
//! Fock functions order theirs as `[q_1..q_n, p_1..p_n]`.

mod coherent;
mod fock;
mod frame;

use serde::{Deserialize, Serialize};

use crate::gaussian::{GaussianError, GaussianSum};

pub use coherent::{
    coherent_kernel, coherent_vector, hh_membership_residual, inner_hh, inner_kernel, kernel_from_vector, ladder_apply,
    momentum_apply, overlap_closed, position_apply, LadderSign,
};
pub use fock::{
    fock_from_vector, fock_inner, fock_membership_residual, isometry_w, reproducing_apply, reproducing_kernel,
    rho_h_apply, ISOMETRY_H,
};
pub use frame::{expand_in_coherent, frame_constant, kernel_frame_constant, phase_grid, CoherentExpansion};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StateError {
    #[error("Planck parameter must be positive, got {0}")]
    InvalidPlanck(f64),
    #[error("Planck parameters differ: {0} vs {1}")]
    PlanckMismatch(f64, f64),
    #[error("phase point has non-finite entries")]
    NonFinite,
    #[error("degrees of freedom differ: {0} vs {1}")]
    DofMismatch(usize, usize),
    #[error("kernel state at h = 0 is not normalizable")]
    NotNormalizable,
    #[error("coherent grid too coarse: reconstruction residual {residual:e} exceeds {tol:e}")]
    GridTooCoarse { residual: f64, tol: f64 },
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// Planck parameter `h > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanckParam(f64);

impl PlanckParam {
    pub fn new(h: f64) -> Result<Self, StateError> {
        if h.is_finite() && h > 0.0 {
            Ok(Self(h))
        } else {
            Err(StateError::InvalidPlanck(h))
        }
    }

    /// `h >= 0`; only for evaluation functionals.
    pub fn classical_or(h: f64) -> Result<Self, StateError> {
        if h.is_finite() && h >= 0.0 {
            Ok(Self(h))
        } else {
            Err(StateError::InvalidPlanck(h))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Phase-space point `(q, p)` with `n` degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self, StateError> {
        if q.len() != p.len() {
            return Err(StateError::DofMismatch(q.len(), p.len()));
        }
        if q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(StateError::NonFinite);
        }
        Ok(Self { q, p })
    }

    /// One degree of freedom.
    pub fn one(q: f64, p: f64) -> Self {
        Self { q: vec![q], p: vec![p] }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// `[q, p]` as one slice of length `2n`.
    pub fn coords(&self) -> Vec<f64> {
        self.q.iter().chain(&self.p).copied().collect()
    }

    pub fn from_coords(c: &[f64]) -> Self {
        let n = c.len() / 2;
        Self { q: c[..n].to_vec(), p: c[n..].to_vec() }
    }

    pub fn neg(&self) -> Self {
        Self { q: self.q.iter().map(|v| -v).collect(), p: self.p.iter().map(|v| -v).collect() }
    }

    pub fn dist2(&self, other: &PhasePoint) -> f64 {
        self.coords().iter().zip(other.coords()).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// Element `(s, x, y)` of the Heisenberg group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergElement {
    pub s: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl HeisenbergElement {
    pub fn identity(n: usize) -> Self {
        Self { s: 0.0, x: vec![0.0; n], y: vec![0.0; n] }
    }

    /// `(s,x,y)(s',x',y') = (s + s' + (x.y' - x'.y)/2, x + x', y + y')`.
    pub fn mul(&self, o: &HeisenbergElement) -> HeisenbergElement {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        HeisenbergElement {
            s: self.s + o.s + 0.5 * (dot(&self.x, &o.y) - dot(&o.x, &self.y)),
            x: self.x.iter().zip(&o.x).map(|(a, b)| a + b).collect(),
            y: self.y.iter().zip(&o.y).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn inverse(&self) -> HeisenbergElement {
        HeisenbergElement { s: -self.s, x: self.x.iter().map(|v| -v).collect(), y: self.y.iter().map(|v| -v).collect() }
    }
}

/// Element `exp(2 pi i s_freq s) * profile(x, y)` of the vector space; `s_freq = -h`.
#[derive(Debug, Clone, PartialEq)]
pub struct HhVector {
    pub h: PlanckParam,
    pub n: usize,
    pub profile: GaussianSum,
    pub s_freq: f64,
}

impl HhVector {
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> num_complex::Complex64 {
        let pt: Vec<f64> = x.iter().chain(y).copied().collect();
        self.profile.evaluate(&pt)
    }

    pub fn add(&self, other: &HhVector) -> Result<HhVector, StateError> {
        same_h(self.h, other.h)?;
        Ok(HhVector { profile: self.profile.add(&other.profile)?, ..self.clone() })
    }

    pub fn scale(&self, c: num_complex::Complex64) -> HhVector {
        HhVector { profile: self.profile.scale(c), ..self.clone() }
    }
}

/// Integration kernel `exp(2 pi i s_freq s) * profile(x, y)`; `s_freq = +h`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelState {
    pub h: PlanckParam,
    pub n: usize,
    pub profile: GaussianSum,
    pub s_freq: f64,
}

impl KernelState {
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> num_complex::Complex64 {
        let pt: Vec<f64> = x.iter().chain(y).copied().collect();
        self.profile.evaluate(&pt)
    }

    /// False at `h = 0`, where the profile is a pure character.
    pub fn is_normalizable(&self) -> bool {
        let vars: Vec<usize> = (0..2 * self.n).collect();
        self.profile.check_integrable(&vars).is_ok()
    }
}

/// Function `f(q, p)` in the Fock-type space at Planck parameter `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockFunction {
    pub h: PlanckParam,
    pub n: usize,
    pub func: GaussianSum,
}

impl FockFunction {
    pub fn evaluate(&self, z: &PhasePoint) -> num_complex::Complex64 {
        self.func.evaluate(&z.coords())
    }
}

pub(crate) fn same_h(a: PlanckParam, b: PlanckParam) -> Result<(), StateError> {
    if a.value() != b.value() {
        return Err(StateError::PlanckMismatch(a.value(), b.value()));
    }
    Ok(())
}
