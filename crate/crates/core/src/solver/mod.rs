//! Regularized least-squares solutions of the kernel-side equations: a
//! Tikhonov grid solve and a damped Gauss-Newton fit of Gaussian kernels.

mod fit;
mod grid;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use fit::{fit_gaussian_ansatz, perturb_kernel};
pub use grid::{grid_axes, l_curve, solve_grid, LCurveRow};

use crate::transforms::{MKernel, ResidualReport, SampleSet, TransformError, DEFAULT_SEED};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("grid spacing {spacing} must be below sqrt(h/2) = {limit}")]
    GridTooCoarse { spacing: f64, limit: f64 },
    #[error("system is ill-conditioned (condition number {cond:e}); use a regularization weight > 0")]
    IllConditioned { cond: f64 },
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ansatz {
    GridMinNorm,
    GaussianAnsatz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Transport kernel centred at the classical image `T(q, p)`.
    Transport,
    Identity,
    Custom {
        kernel: MKernel,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// `(q', p')` grid spacing; default `0.5 sqrt(h/2)`.
    pub spacing: Option<f64>,
    /// Margin beyond the sample box; default `5 sqrt(h)`.
    pub margin: Option<f64>,
    /// Default: the standard 28-point set.
    pub samples: Option<SampleSet>,
    /// Tikhonov weight; default `1e-6` times the cell volume.
    pub lambda: Option<f64>,
    pub ansatz: Ansatz,
    pub init: Init,
    pub max_iter: usize,
    /// Gauss-Newton stops once the max residual is at most this.
    pub tol: f64,
    /// Pass tolerance of the final report.
    pub residual_tol: f64,
    /// Initial Levenberg-Marquardt damping.
    pub damping: f64,
    /// Minimum distance from `q + p = 0` for non-bijective specs.
    pub exclude_line: f64,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            spacing: None,
            margin: None,
            samples: None,
            lambda: None,
            ansatz: Ansatz::GridMinNorm,
            init: Init::Transport,
            max_iter: 50,
            tol: 1e-8,
            residual_tol: 1e-6,
            damping: 1e-3,
            exclude_line: 0.1,
            seed: DEFAULT_SEED,
        }
    }
}

impl SolveConfig {
    pub fn sample_set(&self, bijective: bool) -> SampleSet {
        let s = self.samples.clone().unwrap_or_else(|| SampleSet::default_set(self.seed));
        if bijective {
            s
        } else {
            s.excluding_line(self.exclude_line)
        }
    }
}

/// Regularization diagnostics: for grid solves an L-curve point; for fits the
/// final damping, parameter norm and normal-matrix condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub lambda: f64,
    pub solution_norm: f64,
    pub residual_norm: f64,
    /// `None` when singular.
    pub condition: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub kernel: MKernel,
    pub report: ResidualReport,
    /// Residual norm per accepted step, starting with the initial kernel.
    pub history: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub iterations: usize,
    /// Max residual reached the iteration tolerance.
    pub converged: bool,
    /// True when damping ran out before reaching the tolerance.
    pub failed: bool,
}

impl SolveResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn write_history_csv<W: Write>(&self, mut out: W, header: &[String]) -> Result<(), SolverError> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "iteration,residual_norm")?;
        for (i, r) in self.history.iter().enumerate() {
            writeln!(out, "{i},{r:?}")?;
        }
        Ok(())
    }
}

/// Frobenius norm of all residual entries.
pub(crate) fn residual_norm(r: &ResidualReport) -> f64 {
    r.entries.iter().map(|e| e.value.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests;
