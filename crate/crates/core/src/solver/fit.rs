use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Diagnostics, Init, SolveConfig, SolveResult, SolverError};
use crate::gaussian::{Exponent, ExponentBuilder, GaussianSum, Poly};
use crate::observables::{smear_kernel, smear_sum};
use crate::states::PhasePoint;
use crate::transforms::{
    kernel_residual, transport_kernel, FrameTag, KernelForm, MKernel, ResidualOptions, SampleSet, TransformError,
    TransformationSpec,
};

const MAX_DAMPING: f64 = 1e12;
const AFFINE_TOL: f64 = 1e-10;

fn unsupported(msg: impl Into<String>) -> SolverError {
    SolverError::Transform(TransformError::Unsupported(msg.into()))
}

/// Parameters of `exp(sum_{i<=j} t_ij x_i x_j + sum_i t_i x_i + t_0)`, in that order.
fn param_count(d: usize) -> usize {
    d * (d + 1) / 2 + d + 1
}

fn monomials(d: usize) -> Vec<Poly> {
    let mut out = Vec::with_capacity(param_count(d));
    for i in 0..d {
        for j in i..d {
            let mut m = vec![0; d];
            m[i] += 1;
            m[j] += 1;
            out.push(Poly::monomial(m, Complex64::new(1.0, 0.0)));
        }
    }
    for i in 0..d {
        out.push(Poly::variable(d, i));
    }
    out.push(Poly::constant(d, Complex64::new(1.0, 0.0)));
    out
}

fn block_params(g: &GaussianSum, what: &str) -> Result<Vec<Complex64>, SolverError> {
    let [b] = g.blocks() else {
        return Err(unsupported(format!("{what}: the ansatz needs a single Gaussian block")));
    };
    if b.poly.degree() != 0 {
        return Err(unsupported(format!("{what}: the ansatz needs a constant prefactor")));
    }
    let c0 = b.poly.constant_term();
    if c0.norm() == 0.0 {
        return Err(unsupported(format!("{what}: zero block")));
    }
    let e = &b.exponent;
    let d = e.dim();
    let mut out = Vec::with_capacity(param_count(d));
    for i in 0..d {
        for j in i..d {
            out.push(if i == j { e.quad(i, i) } else { e.quad(i, j) * 2.0 });
        }
    }
    out.extend_from_slice(e.lin());
    out.push(e.constant() + c0.ln());
    Ok(out)
}

fn block_from(theta: &[Complex64], d: usize) -> GaussianSum {
    let mut b = ExponentBuilder::new(d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            b = b.product(i, j, theta[k]);
            k += 1;
        }
    }
    for i in 0..d {
        b = b.linear(i, theta[k]);
        k += 1;
    }
    let e: Exponent = b.constant(theta[k]).build();
    GaussianSum::from_exponent(e)
}

/// Which kernel shape the parameters describe.
#[derive(Clone)]
enum Model {
    /// One block over `[q, p, q', p']`.
    Closed,
    /// One block over `[q', p']` per sample.
    Rows,
}

struct Problem {
    h: f64,
    n: usize,
    model: Model,
    frame: FrameTag,
    label: String,
    samples: SampleSet,
    /// `S_{F_i}` over `[q', p']`.
    big: Vec<GaussianSum>,
    /// `S_{f_i}(z)` per relation, then sample.
    small: Vec<Vec<Complex64>>,
    monos: Vec<Poly>,
}

impl Problem {
    fn block_dim(&self) -> usize {
        match self.model {
            Model::Closed => 4 * self.n,
            Model::Rows => 2 * self.n,
        }
    }

    fn kernel(&self, theta: &[Complex64]) -> Result<MKernel, TransformError> {
        let d = self.block_dim();
        match self.model {
            Model::Closed => MKernel::closed(self.h, self.n, block_from(theta, d), self.frame, &self.label),
            Model::Rows => {
                let p = param_count(d);
                let rows = self
                    .samples
                    .points
                    .iter()
                    .zip(theta.chunks(p))
                    .map(|(z, t)| (z.clone(), block_from(t, d)))
                    .collect();
                MKernel::rows(self.h, self.n, rows, self.frame, &self.label)
            }
        }
    }

    /// `∫ g(z, w) S_{F_i}(w) dw` at every sample, for each `g = mono_k * m` and each relation.
    ///
    /// Output index: `[k][i * samples + s]`, with `k = param_count` giving `m` itself.
    fn integrals(&self, theta: &[Complex64], with_jacobian: bool) -> Result<Vec<Vec<Complex64>>, TransformError> {
        let d = self.block_dim();
        let p = param_count(d);
        let s_count = self.samples.points.len();
        let ks: Vec<usize> = if with_jacobian { (0..=p).collect() } else { vec![p] };
        match self.model {
            Model::Closed => {
                let m = self.kernel(theta)?;
                let sum = m.closed_sum().expect("closed model");
                let w: Vec<usize> = (2 * self.n..4 * self.n).collect();
                let prods =
                    self.big.iter().map(|sf| sum.multiply(&sf.embed(4 * self.n, &w))).collect::<Result<Vec<_>, _>>()?;
                ks.par_iter()
                    .map(|&k| {
                        let mut col = Vec::with_capacity(prods.len() * s_count);
                        for prod in &prods {
                            let g = if k == p { prod.clone() } else { prod.mul_poly(&self.monos[k]) };
                            let whole = g.integrate_partial(&w)?;
                            col.extend(self.samples.points.iter().map(|z| whole.evaluate(&z.coords())));
                        }
                        Ok(col)
                    })
                    .collect()
            }
            Model::Rows => {
                self.kernel(theta)?;
                // Per sample: values for each k and relation.
                let per: Vec<Vec<Vec<Complex64>>> = self
                    .samples
                    .points
                    .par_iter()
                    .enumerate()
                    .map(|(s, _)| {
                        let row = block_from(&theta[s * p..(s + 1) * p], d);
                        let prods = self.big.iter().map(|sf| row.multiply(sf)).collect::<Result<Vec<_>, _>>()?;
                        ks.iter()
                            .map(|&k| {
                                prods
                                    .iter()
                                    .map(|prod| {
                                        let g = if k == p { prod.clone() } else { prod.mul_poly(&self.monos[k]) };
                                        Ok(g.integrate_all()?)
                                    })
                                    .collect::<Result<Vec<_>, TransformError>>()
                            })
                            .collect::<Result<Vec<_>, TransformError>>()
                    })
                    .collect::<Result<_, TransformError>>()?;
                let mut out = vec![vec![Complex64::new(0.0, 0.0); self.big.len() * s_count]; ks.len()];
                for (s, by_k) in per.iter().enumerate() {
                    for (kk, vals) in by_k.iter().enumerate() {
                        for (i, v) in vals.iter().enumerate() {
                            out[kk][i * s_count + s] = *v;
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    fn residual(&self, values: &[Complex64]) -> Vec<Complex64> {
        let s_count = self.samples.points.len();
        values.iter().enumerate().map(|(idx, v)| v - self.small[idx / s_count][idx % s_count]).collect()
    }

    /// Complex residual and, on request, the complex Jacobian (residuals x parameters).
    fn evaluate(
        &self,
        theta: &[Complex64],
        with_jacobian: bool,
    ) -> Result<(Vec<Complex64>, Option<DMatrix<Complex64>>), TransformError> {
        let cols = self.integrals(theta, with_jacobian)?;
        let r = self.residual(cols.last().expect("value column"));
        if r.iter().any(|v| !v.is_finite()) {
            return Err(TransformError::Kernel("non-finite residual".into()));
        }
        if !with_jacobian {
            return Ok((r, None));
        }
        let p = param_count(self.block_dim());
        let rows = r.len();
        let jac = match self.model {
            Model::Closed => DMatrix::from_fn(rows, p, |a, k| cols[k][a]),
            Model::Rows => {
                let s_count = self.samples.points.len();
                DMatrix::from_fn(rows, p * s_count, |a, col| {
                    let (s, k) = (col / p, col % p);
                    if a % s_count == s {
                        cols[k][a]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            }
        };
        Ok((r, Some(jac)))
    }
}

fn cost(r: &[Complex64]) -> f64 {
    r.iter().map(|v| v.norm_sqr()).sum()
}

fn max_abs(r: &[Complex64]) -> f64 {
    r.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Real normal matrix `Jr^T Jr` and gradient `Jr^T rr` of the real split, unknowns `[Re t, Im t]`.
fn normal_equations(j: &DMatrix<Complex64>, r: &[Complex64]) -> (DMatrix<f64>, DVector<f64>) {
    let (m, p) = j.shape();
    let jr = DMatrix::from_fn(2 * m, 2 * p, |a, b| {
        let v = j[(a % m, b % p)];
        match (a < m, b < p) {
            (true, true) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
            (false, false) => v.re,
        }
    });
    let rr = DVector::from_fn(2 * m, |a, _| if a < m { r[a].re } else { r[a - m].im });
    (jr.transpose() * &jr, jr.transpose() * rr)
}

fn affine_parts(spec: &TransformationSpec, samples: &SampleSet) -> Option<([f64; 4], [f64; 2])> {
    if spec.n != 1 {
        return None;
    }
    let t0 = spec.apply_map(&PhasePoint::one(0.0, 0.0))?;
    let tq = spec.apply_map(&PhasePoint::one(1.0, 0.0))?;
    let tp = spec.apply_map(&PhasePoint::one(0.0, 1.0))?;
    let a = [tq.q[0] - t0.q[0], tp.q[0] - t0.q[0], tq.p[0] - t0.p[0], tp.p[0] - t0.p[0]];
    let s = [t0.q[0], t0.p[0]];
    let affine = samples.points.iter().all(|z| {
        let img = spec.apply_map(z).expect("map present");
        let (q, p) = (z.q[0], z.p[0]);
        (a[0] * q + a[1] * p + s[0] - img.q[0]).abs() <= AFFINE_TOL * (1.0 + img.q[0].abs())
            && (a[2] * q + a[3] * p + s[1] - img.p[0]).abs() <= AFFINE_TOL * (1.0 + img.p[0].abs())
    });
    affine.then_some((a, s))
}

/// `h^{-n} exp(-(pi/h)|w - T(z)|^2)` for each sample.
fn transport_rows(spec: &TransformationSpec, h: f64, samples: &SampleSet) -> Result<MKernel, SolverError> {
    let n = spec.n;
    let rows = samples
        .points
        .iter()
        .map(|z| {
            let img = spec.apply_map(z).expect("map present").coords();
            let mut b = ExponentBuilder::new(2 * n);
            for (k, c) in img.iter().enumerate() {
                b = b.square(&[(k, 1.0)], -c, -std::f64::consts::PI / h);
            }
            let e = b.constant(-(n as f64) * h.ln()).build();
            (z.clone(), GaussianSum::from_exponent(e))
        })
        .collect();
    Ok(MKernel::rows(h, n, rows, FrameTag::Kernel, "transport rows")?)
}

fn initial_kernel(spec: &TransformationSpec, h: f64, samples: &SampleSet, init: &Init) -> Result<MKernel, SolverError> {
    match init {
        Init::Custom { kernel } => Ok(kernel.clone()),
        Init::Identity => {
            if spec.n != 1 {
                return Err(unsupported("identity initialization for n > 1"));
            }
            Ok(transport_kernel(h, [1.0, 0.0, 0.0, 1.0], [0.0, 0.0], "identity transport")?)
        }
        Init::Transport => {
            if spec.classical_map().is_none() {
                return Err(SolverError::InvalidConfig(format!(
                    "{}: transport initialization needs a classical map; supply a custom kernel",
                    spec.name
                )));
            }
            match affine_parts(spec, samples) {
                Some((a, s)) => Ok(transport_kernel(h, a, s, "transport")?),
                None => transport_rows(spec, h, samples),
            }
        }
    }
}

/// Damped Gauss-Newton (Levenberg-Marquardt) on the Gaussian exponent
/// coefficients of a closed or per-row kernel. Accepted steps strictly lower
/// the summed squared residual, so the history never increases.
pub fn fit_gaussian_ansatz(
    spec: &TransformationSpec,
    h: f64,
    config: &SolveConfig,
) -> Result<SolveResult, SolverError> {
    if !(config.damping > 0.0) || !(config.tol >= 0.0) {
        return Err(SolverError::InvalidConfig("damping must be > 0 and tol >= 0".into()));
    }
    if let Some(r) = spec.relations.iter().find(|r| !r.rhs.is_in_class()) {
        return Err(unsupported(format!(
            "relation '{r}': the ansatz needs closed-form smearing of the transformed side"
        )));
    }
    let samples = config.sample_set(spec.bijective);
    let init = initial_kernel(spec, h, &samples, &config.init)?;
    if init.h != h || init.n != spec.n {
        return Err(SolverError::InvalidConfig("initial kernel differs from the spec in h or n".into()));
    }
    let (model, mut theta) = match &init.form {
        KernelForm::Closed(sum) => (Model::Closed, block_params(sum, &init.label)?),
        KernelForm::Rows(_) => {
            let mut theta = Vec::new();
            for z in &samples.points {
                let crate::transforms::Row::Gaussian(g) = init.row(z)? else {
                    unreachable!("row kernels give Gaussian rows")
                };
                theta.extend(block_params(&g, &init.label)?);
            }
            (Model::Rows, theta)
        }
        KernelForm::Grid(_) => return Err(unsupported("grid kernels have no Gaussian parameters")),
    };
    let n = spec.n;
    let problem = Problem {
        h,
        n,
        model,
        frame: init.frame,
        label: format!("gaussian fit from {}", init.label),
        big: spec
            .relations
            .iter()
            .map(|r| smear_sum(&r.rhs, h, n))
            .collect::<Result<_, _>>()
            .map_err(TransformError::from)?,
        small: spec
            .relations
            .iter()
            .map(|r| samples.points.iter().map(|z| smear_kernel(&r.lhs, h, z)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<_, _>>()
            .map_err(TransformError::from)?,
        monos: monomials(problem_dim(&init.form, n)),
        samples,
    };

    let (mut r, _) = problem.evaluate(&theta, false)?;
    let mut c = cost(&r);
    let mut history = vec![c.sqrt()];
    let mut mu = config.damping;
    let mut iterations = 0;
    let mut failed = false;
    let mut condition = None;
    while max_abs(&r) > config.tol && iterations < config.max_iter {
        let (_, jac) = problem.evaluate(&theta, true)?;
        let (jtj, g) = normal_equations(&jac.expect("jacobian requested"), &r);
        condition = normal_condition(&jtj);
        let floor = 1e-12 * jtj.diagonal().max().max(1e-300);
        let accepted = loop {
            let mut lhs = jtj.clone();
            for k in 0..lhs.nrows() {
                lhs[(k, k)] += mu * (jtj[(k, k)] + floor);
            }
            let step = lhs.cholesky().map(|ch| ch.solve(&(-&g)));
            if let Some(step) = step {
                let p = theta.len();
                let trial: Vec<Complex64> =
                    theta.iter().enumerate().map(|(k, t)| t + Complex64::new(step[k], step[k + p])).collect();
                if let Ok((tr, _)) = problem.evaluate(&trial, false) {
                    let tc = cost(&tr);
                    if tc < c {
                        theta = trial;
                        r = tr;
                        c = tc;
                        mu = (mu / 3.0).max(1e-15);
                        break true;
                    }
                }
            }
            mu *= 4.0;
            if mu > MAX_DAMPING {
                break false;
            }
        };
        if !accepted {
            failed = true;
            break;
        }
        iterations += 1;
        history.push(c.sqrt());
    }

    let kernel = problem.kernel(&theta)?;
    let report =
        kernel_residual(spec, &kernel, &problem.samples, &ResidualOptions::default().with_tol(config.residual_tol))?;
    let norm = theta.iter().map(|t| t.norm_sqr()).sum::<f64>().sqrt();
    Ok(SolveResult {
        diagnostics: Diagnostics {
            lambda: mu,
            solution_norm: norm,
            residual_norm: super::residual_norm(&report),
            condition,
        },
        converged: max_abs(&r) <= config.tol,
        history,
        iterations,
        failed,
        kernel,
        report,
    })
}

fn problem_dim(form: &KernelForm, n: usize) -> usize {
    match form {
        KernelForm::Closed(_) => 4 * n,
        _ => 2 * n,
    }
}

fn normal_condition(jtj: &DMatrix<f64>) -> Option<f64> {
    let ev = jtj.clone().symmetric_eigenvalues();
    let max = ev.max();
    let min = ev.min();
    let cond = max / min;
    (min > 0.0 && cond.is_finite()).then_some(cond)
}

/// Multiplies every quadratic and linear exponent coefficient by `1 + rel * e_k`
/// with seeded signs `e_k = +-1`; constants stay fixed.
pub fn perturb_kernel(m: &MKernel, rel: f64, seed: u64) -> Result<MKernel, SolverError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shake = |g: &GaussianSum, what: &str| -> Result<GaussianSum, SolverError> {
        let d = g.dim();
        let mut theta = block_params(g, what)?;
        let last = theta.len() - 1;
        for t in &mut theta[..last] {
            let sign = if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
            *t *= 1.0 + rel * sign;
        }
        Ok(block_from(&theta, d))
    };
    let label = format!("{} perturbed by {rel}", m.label);
    match &m.form {
        KernelForm::Closed(s) => Ok(MKernel::closed(m.h, m.n, shake(s, &m.label)?, m.frame, &label)?),
        KernelForm::Rows(rows) => {
            let rows = rows
                .iter()
                .map(|(z, g)| Ok((z.clone(), shake(g, &m.label)?)))
                .collect::<Result<Vec<_>, SolverError>>()?;
            Ok(MKernel::rows(m.h, m.n, rows, m.frame, &label)?)
        }
        KernelForm::Grid(_) => Err(unsupported("perturbing grid kernels")),
    }
}
