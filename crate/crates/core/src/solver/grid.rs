use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{residual_norm, Diagnostics, SolveConfig, SolveResult, SolverError};
use crate::observables::smear_kernel;
use crate::states::PhasePoint;
use crate::transforms::{
    kernel_residual, FrameTag, GridKernel, MKernel, ResidualOptions, SampleSet, TransformError, TransformationSpec,
};

/// Condition number above which an unregularized solve is refused.
const MAX_CONDITION: f64 = 1e12;

/// Uniform product grid over the sample box plus margin, returned with the cell volume.
///
/// Equal weights are the trapezoid rule once the tails at the edges are negligible.
pub fn grid_axes(h: f64, samples: &SampleSet, config: &SolveConfig) -> Result<(Vec<Vec<f64>>, f64), SolverError> {
    let limit = (h / 2.0).sqrt();
    let spacing = config.spacing.unwrap_or(0.5 * limit);
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(SolverError::InvalidConfig(format!("spacing must be positive, got {spacing}")));
    }
    if spacing >= limit {
        return Err(SolverError::GridTooCoarse { spacing, limit });
    }
    let margin = config.margin.unwrap_or(5.0 * h.sqrt());
    if !(margin >= 0.0) {
        return Err(SolverError::InvalidConfig(format!("margin must be non-negative, got {margin}")));
    }
    let pts = &samples.points;
    if pts.is_empty() {
        return Err(SolverError::InvalidConfig("empty sample set".into()));
    }
    let n = pts[0].n();
    let mut axes = Vec::with_capacity(2 * n);
    for k in 0..2 * n {
        let vals = pts.iter().map(|z| z.coords()[k]);
        let lo = vals.clone().fold(f64::INFINITY, f64::min) - margin;
        let hi = vals.fold(f64::NEG_INFINITY, f64::max) + margin;
        let count = ((hi - lo) / spacing).ceil() as usize + 1;
        axes.push((0..count).map(|i| lo + i as f64 * spacing).collect());
    }
    Ok((axes, spacing.powi(2 * n as i32)))
}

fn check_lambda(lambda: f64) -> Result<(), SolverError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(SolverError::InvalidConfig(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// The shared system: `A_ij = w * S_{F_i}(node_j)` and its SVD.
struct Assembled {
    axes: Vec<Vec<f64>>,
    weight: f64,
    samples: SampleSet,
    u: DMatrix<Complex64>,
    sigma: Vec<f64>,
    v_t: DMatrix<Complex64>,
}

impl Assembled {
    fn new(spec: &TransformationSpec, h: f64, config: &SolveConfig) -> Result<Self, SolverError> {
        if spec.n != 1 {
            return Err(SolverError::InvalidConfig("grid solves support one degree of freedom".into()));
        }
        let samples = config.sample_set(spec.bijective);
        let (axes, weight) = grid_axes(h, &samples, config)?;
        let probe = GridKernel {
            axes: axes.clone(),
            cell_weight: weight,
            samples: vec![],
            rows: vec![],
            basis: vec![],
            targets: vec![],
        };
        let nodes = probe.nodes();
        let k = spec.relations.len();
        let mut a = DMatrix::<Complex64>::zeros(k, nodes.len());
        for (i, r) in spec.relations.iter().enumerate() {
            let row: Vec<Complex64> = nodes
                .par_iter()
                .map(|w| smear_kernel(&r.rhs, h, &PhasePoint::from_coords(w)).map(|v| v * weight))
                .collect::<Result<_, _>>()
                .map_err(TransformError::from)?;
            for (j, v) in row.into_iter().enumerate() {
                a[(i, j)] = v;
            }
        }
        let svd = a.svd(true, true);
        let sigma = svd.singular_values.iter().copied().collect();
        Ok(Self { axes, weight, samples, u: svd.u.expect("u requested"), sigma, v_t: svd.v_t.expect("v_t requested") })
    }

    fn condition(&self) -> f64 {
        let max = self.sigma.iter().copied().fold(0.0, f64::max);
        let min = self.sigma.iter().copied().fold(f64::INFINITY, f64::min);
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }

    fn condition_opt(&self) -> Option<f64> {
        Some(self.condition()).filter(|c| c.is_finite())
    }

    /// `P` with `row(z) = P b(z)`, as one column per relation.
    fn generator(&self, lambda: f64) -> Result<Vec<Vec<Complex64>>, SolverError> {
        let cond = self.condition();
        if lambda == 0.0 && !(cond <= MAX_CONDITION) {
            return Err(SolverError::IllConditioned { cond });
        }
        let k = self.u.nrows();
        let nodes = self.v_t.ncols();
        let mut cols = vec![vec![Complex64::new(0.0, 0.0); nodes]; k];
        for (s, &sig) in self.sigma.iter().enumerate() {
            let d = sig * sig + lambda;
            if d == 0.0 {
                continue;
            }
            let f = sig / d;
            for (i, col) in cols.iter_mut().enumerate() {
                let c = self.u[(i, s)].conj() * f;
                for (j, v) in col.iter_mut().enumerate() {
                    *v += self.v_t[(s, j)].conj() * c;
                }
            }
        }
        Ok(cols)
    }

    fn kernel(&self, spec: &TransformationSpec, h: f64, lambda: f64) -> Result<MKernel, SolverError> {
        let basis = self.generator(lambda)?;
        let rows = self
            .samples
            .points
            .par_iter()
            .map(|z| {
                let b = spec
                    .relations
                    .iter()
                    .map(|r| smear_kernel(&r.lhs, h, z))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(TransformError::from)?;
                let mut row = vec![Complex64::new(0.0, 0.0); basis[0].len()];
                for (col, bi) in basis.iter().zip(&b) {
                    for (x, c) in row.iter_mut().zip(col) {
                        *x += c * bi;
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>, SolverError>>()?;
        let grid = GridKernel {
            axes: self.axes.clone(),
            cell_weight: self.weight,
            samples: self.samples.points.clone(),
            rows,
            basis,
            targets: spec.relations.iter().map(|r| r.lhs_src.clone()).collect(),
        };
        Ok(MKernel::grid(h, spec.n, grid, FrameTag::Kernel, &format!("grid solve (lambda = {lambda:e})"))?)
    }

    fn finish(
        &self,
        spec: &TransformationSpec,
        h: f64,
        lambda: f64,
        config: &SolveConfig,
    ) -> Result<SolveResult, SolverError> {
        let kernel = self.kernel(spec, h, lambda)?;
        let report =
            kernel_residual(spec, &kernel, &self.samples, &ResidualOptions::default().with_tol(config.residual_tol))?;
        let solution_norm = solution_norm(&kernel);
        let r = residual_norm(&report);
        Ok(SolveResult {
            diagnostics: Diagnostics { lambda, solution_norm, residual_norm: r, condition: self.condition_opt() },
            history: vec![r],
            iterations: 1,
            converged: report.pass,
            failed: false,
            kernel,
            report,
        })
    }
}

/// `(sum over samples of integral |m(z, w)|^2 dw)^(1/2)` by the grid rule.
fn solution_norm(m: &MKernel) -> f64 {
    match &m.form {
        crate::transforms::KernelForm::Grid(g) => {
            (g.rows.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>() * g.cell_weight).sqrt()
        }
        _ => f64::NAN,
    }
}

/// Minimum-norm Tikhonov solution of the discretized kernel equations, one row per sample.
pub fn solve_grid(spec: &TransformationSpec, h: f64, config: &SolveConfig) -> Result<SolveResult, SolverError> {
    let sys = Assembled::new(spec, h, config)?;
    let lambda = config.lambda.unwrap_or(1e-6 * sys.weight);
    check_lambda(lambda)?;
    sys.finish(spec, h, lambda, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LCurveRow {
    pub lambda: f64,
    pub solution_norm: f64,
    pub residual_norm: f64,
    /// `||b||`, the residual of the zero kernel.
    pub rhs_norm: f64,
}

/// One Tikhonov solve per `lambda`, reusing the factorization.
pub fn l_curve(
    spec: &TransformationSpec,
    h: f64,
    config: &SolveConfig,
    lambdas: &[f64],
) -> Result<Vec<LCurveRow>, SolverError> {
    let sys = Assembled::new(spec, h, config)?;
    let zero = MKernel::zero(h, spec.n, FrameTag::Kernel);
    let rhs_norm = residual_norm(&kernel_residual(spec, &zero, &sys.samples, &ResidualOptions::default())?);
    lambdas
        .iter()
        .map(|&lambda| {
            check_lambda(lambda)?;
            let r = sys.finish(spec, h, lambda, config)?;
            Ok(LCurveRow {
                lambda,
                solution_norm: r.diagnostics.solution_norm,
                residual_norm: r.diagnostics.residual_norm,
                rhs_norm,
            })
        })
        .collect()
}
