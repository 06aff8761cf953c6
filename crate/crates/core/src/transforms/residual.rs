use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{overlap_sum, transport_sum, FrameTag, KernelForm, MKernel, Row};
use super::report::{ResidualEntry, ResidualReport};
use super::samples::SampleSet;
use super::spec::TransformationSpec;
use super::TransformError;
use crate::gaussian::{quad_oracle_checked, quad_oracle_sum, AffineMap, GaussianFrame, GaussianSum, HermiteRule};
use crate::observables::{matrix_element, matrix_element_sum, smear_kernel, smear_sum, ClassicalExpr};
use crate::states::{frame_constant, kernel_frame_constant, PhasePoint};

/// Pass tolerance when every integral is closed form.
pub const CLOSED_TOL: f64 = 1e-8;
/// Pass tolerance when quadrature participates.
pub const QUADRATURE_TOL: f64 = 1e-6;
const QUAD_ORDER: usize = 40;
const OPAQUE_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathChoice {
    /// Closed form wherever the integrand allows it.
    Auto,
    /// Gauss-Hermite quadrature for the outer integral even when a closed form exists.
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualOptions {
    pub path: PathChoice,
    /// Overrides the path-dependent default.
    pub tol: Option<f64>,
    /// Common factor applied to both sides of the vector system.
    pub frame_scale: f64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self { path: PathChoice::Auto, tol: None, frame_scale: 1.0 }
    }
}

impl ResidualOptions {
    pub fn quadrature() -> Self {
        Self { path: PathChoice::Quadrature, ..Self::default() }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    fn tol(&self, quadrature: bool) -> f64 {
        self.tol.unwrap_or(if quadrature { QUADRATURE_TOL } else { CLOSED_TOL })
    }
}

/// Smeared symbol `S_F`, closed when possible.
enum Smeared<'a> {
    Closed(GaussianSum),
    Opaque(&'a ClassicalExpr, f64),
}

impl<'a> Smeared<'a> {
    fn new(f: &'a ClassicalExpr, h: f64, n: usize) -> Result<Self, TransformError> {
        if f.is_in_class() {
            Ok(Smeared::Closed(smear_sum(f, h, n)?))
        } else {
            Ok(Smeared::Opaque(f, h))
        }
    }

    fn at(&self, w: &[f64]) -> Result<Complex64, TransformError> {
        match self {
            Smeared::Closed(s) => Ok(s.evaluate(w)),
            Smeared::Opaque(f, h) => Ok(smear_kernel(f, *h, &PhasePoint::from_coords(w))?),
        }
    }
}

fn block_sum(g: &GaussianSum, i: usize) -> GaussianSum {
    let b = &g.blocks()[i];
    GaussianSum::from_block(b.exponent.clone(), b.poly.clone())
}

fn block_frame(g: &GaussianSum, i: usize) -> Result<GaussianFrame, TransformError> {
    let e = &g.blocks()[i].exponent;
    let vars: Vec<usize> = (0..g.dim()).collect();
    let re_lin: Vec<f64> = e.lin().iter().map(|v| v.re).collect();
    Ok(GaussianFrame::from_quadratic(g.dim(), &e.real_block(&vars), &re_lin)?)
}

/// `∫ g(w) f(w) dw` with `f` evaluated pointwise; one Hermite frame per block of `g`.
fn integrate_opaque(
    g: &GaussianSum,
    f: &(dyn Fn(&[f64]) -> Result<Complex64, TransformError> + Sync),
) -> Result<Complex64, TransformError> {
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..g.blocks().len() {
        let frame = block_frame(g, i)?;
        let b = block_sum(g, i);
        let integrand = |w: &[f64]| match f(w) {
            Ok(v) => b.evaluate(w) * v,
            Err(_) => Complex64::new(f64::NAN, f64::NAN),
        };
        let (v, _) = quad_oracle_checked(&integrand, &frame, OPAQUE_ORDER, 1e-9)?;
        if !v.is_finite() {
            return Err(TransformError::Kernel("opaque integrand is not finite on the quadrature nodes".into()));
        }
        total += v;
    }
    Ok(total)
}

fn integrate_closed(g: &GaussianSum, f: &GaussianSum, quadrature: bool) -> Result<Complex64, TransformError> {
    let prod = g.multiply(f)?;
    if quadrature {
        Ok(quad_oracle_sum(&prod, &HermiteRule::new(QUAD_ORDER))?)
    } else {
        Ok(prod.integrate_all()?)
    }
}

fn check_dims(spec: &TransformationSpec, m: &MKernel) -> Result<(), TransformError> {
    if spec.n != m.n {
        return Err(TransformError::Kernel(format!("kernel has n = {}, spec has n = {}", m.n, spec.n)));
    }
    Ok(())
}

fn relation_label(i: usize) -> String {
    format!("r{}", i + 1)
}

/// `∫ m(z, w) S_{F_i}(w) dw - S_{f_i}(z)` for each relation and sample.
pub fn kernel_residual(
    spec: &TransformationSpec,
    m: &MKernel,
    samples: &SampleSet,
    opts: &ResidualOptions,
) -> Result<ResidualReport, TransformError> {
    check_dims(spec, m)?;
    let (h, n) = (m.h, m.n);
    let quadrature = opts.path == PathChoice::Quadrature
        || spec.relations.iter().any(|r| !r.rhs.is_in_class() || !r.lhs.is_in_class());
    let mut entries = Vec::new();
    for (i, r) in spec.relations.iter().enumerate() {
        let big = Smeared::new(&r.rhs, h, n)?;
        let small = Smeared::new(&r.lhs, h, n)?;
        let lhs: Vec<Complex64> = match (&m.form, &big, opts.path) {
            (KernelForm::Closed(ms), Smeared::Closed(sf), PathChoice::Auto) => {
                let w: Vec<usize> = (2 * n..4 * n).collect();
                let whole = ms.multiply(&sf.embed(4 * n, &w))?.integrate_partial(&w)?;
                samples.points.iter().map(|z| whole.evaluate(&z.coords())).collect()
            }
            (KernelForm::Grid(g), _, _) => {
                let nodes = g.nodes();
                let sf: Vec<Complex64> = nodes.par_iter().map(|w| big.at(w)).collect::<Result<_, _>>()?;
                samples.points.par_iter().map(|z| row_dot(&m.row(z)?, &sf)).collect::<Result<_, TransformError>>()?
            }
            _ => samples
                .points
                .par_iter()
                .map(|z| {
                    let Row::Gaussian(row) = m.row(z)? else {
                        unreachable!("closed and row kernels give Gaussian rows")
                    };
                    match &big {
                        Smeared::Closed(sf) => integrate_closed(&row, sf, opts.path == PathChoice::Quadrature),
                        Smeared::Opaque(..) => integrate_opaque(&row, &|w| big.at(w)),
                    }
                })
                .collect::<Result<_, TransformError>>()?,
        };
        let rhs: Vec<Complex64> =
            samples.points.par_iter().map(|z| small.at(&z.coords())).collect::<Result<_, TransformError>>()?;
        for ((z, a), b) in samples.points.iter().zip(lhs).zip(rhs) {
            entries.push(ResidualEntry { relation: relation_label(i), z: z.clone(), z2: None, value: a - b });
        }
    }
    let path = if quadrature { "quadrature" } else { "closed" };
    Ok(ResidualReport::new(
        &m.label,
        &format!("kernel:{}", spec.name),
        &samples.description,
        path,
        entries,
        opts.tol(quadrature),
    ))
}

fn row_dot(row: &Row, sf: &[Complex64]) -> Result<Complex64, TransformError> {
    match row {
        Row::Discrete { weight, values, .. } => {
            Ok(values.iter().zip(sf).map(|(a, b)| a * b).sum::<Complex64>() * *weight)
        }
        Row::Gaussian(_) => Err(TransformError::Kernel("grid kernel produced a Gaussian row".into())),
    }
}

/// Fixes the last `2n` of `4n` variables of `g` to `fixed`.
fn fix_second(g: &GaussianSum, n: usize, fixed: &[f64]) -> Result<GaussianSum, TransformError> {
    let (d, k) = (4 * n, 2 * n);
    let mut mat = vec![0.0; d * k];
    let mut shift = vec![0.0; d];
    for i in 0..k {
        mat[i * k + i] = 1.0;
        shift[k + i] = fixed[i];
    }
    Ok(g.substitute_affine(&AffineMap::new(d, k, mat, shift))?)
}

fn fix_first(g: &GaussianSum, n: usize, fixed: &[f64]) -> Result<GaussianSum, TransformError> {
    let (d, k) = (4 * n, 2 * n);
    let mut mat = vec![0.0; d * k];
    let mut shift = vec![0.0; d];
    for i in 0..k {
        mat[(k + i) * k + i] = 1.0;
        shift[i] = fixed[i];
    }
    Ok(g.substitute_affine(&AffineMap::new(d, k, mat, shift))?)
}

/// `∫ m(z, w) <P(f_i) v_w, v_z'> dw - ∫ m(w, z') <P(F_i) v_z, v_w> dw`.
pub fn vector_residual(
    spec: &TransformationSpec,
    m: &MKernel,
    pairs: &[(PhasePoint, PhasePoint)],
    opts: &ResidualOptions,
) -> Result<ResidualReport, TransformError> {
    check_dims(spec, m)?;
    let (h, n) = (m.h, m.n);
    let ms =
        m.closed_sum().ok_or_else(|| TransformError::Unsupported("vector residual needs a closed kernel".into()))?;
    let in_class = spec.relations.iter().all(|r| r.lhs.is_in_class() && r.rhs.is_in_class());
    let quadrature = opts.path == PathChoice::Quadrature || !in_class;
    let scale = Complex64::new(opts.frame_scale, 0.0);
    let (z_, w_, zp_): (Vec<usize>, Vec<usize>, Vec<usize>) =
        ((0..2 * n).collect(), (2 * n..4 * n).collect(), (4 * n..6 * n).collect());
    let mut entries = Vec::new();
    for (i, r) in spec.relations.iter().enumerate() {
        let values: Vec<Complex64> = if !quadrature {
            let me_f = matrix_element_sum(&r.lhs, h, n)?;
            let me_big = matrix_element_sum(&r.rhs, h, n)?;
            let first: Vec<usize> = z_.iter().chain(&w_).copied().collect();
            let second: Vec<usize> = w_.iter().chain(&zp_).copied().collect();
            let lhs = ms.embed(6 * n, &first).multiply(&me_f.embed(6 * n, &second))?.integrate_partial(&w_)?;
            let rhs = ms.embed(6 * n, &second).multiply(&me_big.embed(6 * n, &first))?.integrate_partial(&w_)?;
            let diff = lhs.add(&rhs.scale(Complex64::new(-1.0, 0.0)))?;
            pairs
                .iter()
                .map(|(z, zp)| {
                    let pt: Vec<f64> = z.coords().into_iter().chain(zp.coords()).collect();
                    diff.evaluate(&pt) * scale
                })
                .collect()
        } else {
            let closed = |f: &ClassicalExpr| -> Result<Option<GaussianSum>, TransformError> {
                if f.is_in_class() {
                    Ok(Some(matrix_element_sum(f, h, n)?))
                } else {
                    Ok(None)
                }
            };
            let (me_f, me_big) = (closed(&r.lhs)?, closed(&r.rhs)?);
            pairs
                .par_iter()
                .map(|(z, zp)| {
                    let Row::Gaussian(row) = m.row(z)? else { unreachable!() };
                    let col = m.column(zp)?;
                    let lhs = match &me_f {
                        Some(me) => integrate_closed(&row, &fix_second(me, n, &zp.coords())?, true)?,
                        None => integrate_opaque(&row, &|w| {
                            Ok(matrix_element(&r.lhs, h, &PhasePoint::from_coords(w), zp)?)
                        })?,
                    };
                    let rhs = match &me_big {
                        Some(me) => integrate_closed(&col, &fix_first(me, n, &z.coords())?, true)?,
                        None => {
                            integrate_opaque(&col, &|w| Ok(matrix_element(&r.rhs, h, z, &PhasePoint::from_coords(w))?))?
                        }
                    };
                    Ok((lhs - rhs) * scale)
                })
                .collect::<Result<_, TransformError>>()?
        };
        for ((z, zp), v) in pairs.iter().zip(values) {
            entries.push(ResidualEntry { relation: relation_label(i), z: z.clone(), z2: Some(zp.clone()), value: v });
        }
    }
    let desc = format!("{} (z, z') pairs", pairs.len());
    let path = if quadrature { "quadrature" } else { "closed" };
    Ok(ResidualReport::new(&m.label, &format!("vector:{}", spec.name), &desc, path, entries, opts.tol(quadrature)))
}

/// `c ∫ g1(a, w) g2(b, w) dw` (`transpose = false`) or `c ∫ g1(w, a) g2(w, b) dw`, over `[a, b]`.
fn compose(g1: &GaussianSum, g2: &GaussianSum, n: usize, transpose: bool) -> Result<GaussianSum, TransformError> {
    let (a, w, b): (Vec<usize>, Vec<usize>, Vec<usize>) =
        ((0..2 * n).collect(), (2 * n..4 * n).collect(), (4 * n..6 * n).collect());
    let join = |x: &[usize], y: &[usize]| -> Vec<usize> { x.iter().chain(y).copied().collect() };
    let (p1, p2) = if transpose { (join(&w, &a), join(&w, &b)) } else { (join(&a, &w), join(&b, &w)) };
    Ok(g1.embed(6 * n, &p1).multiply(&g2.embed(6 * n, &p2))?.integrate_partial(&w)?)
}

/// Sesquilinear unitarity identities against the Gram of the kernel's own frame:
/// `c ∫ m(a,w) conj m(b,w) dw = Γ(a,b)` and `c ∫ conj m(w,a) m(w,b) dw = Γ(a,b)`.
pub fn unitarity_residual(m: &MKernel, samples: &SampleSet, tol: f64) -> Result<ResidualReport, TransformError> {
    let (h, n) = (m.h, m.n);
    let ms =
        m.closed_sum().ok_or_else(|| TransformError::Unsupported("unitarity residual needs a closed kernel".into()))?;
    let (c, gram) = match m.frame {
        FrameTag::Vector => (frame_constant(h, n)?, overlap_sum(h, n)),
        FrameTag::Kernel => (kernel_frame_constant(h, n)?, transport_sum(h, n)),
    };
    let c = Complex64::new(c, 0.0);
    let forward = compose(ms, &ms.conj(), n, false)?.scale(c);
    let backward = compose(&ms.conj(), ms, n, true)?.scale(c);
    let gamma_f = compose(&gram, &gram.conj(), n, false)?.scale(c);
    let gamma_b = compose(&gram.conj(), &gram, n, true)?.scale(c);
    let pts = &samples.points;
    let mut pairs = Vec::new();
    for (i, a) in pts.iter().enumerate() {
        pairs.push((a.clone(), a.clone()));
        pairs.push((a.clone(), pts[(i + 1) % pts.len()].clone()));
    }
    let mut entries = Vec::new();
    for (label, s, g) in [("UU*", &forward, &gamma_f), ("U*U", &backward, &gamma_b)] {
        for (a, b) in &pairs {
            let pt: Vec<f64> = a.coords().into_iter().chain(b.coords()).collect();
            entries.push(ResidualEntry {
                relation: label.to_string(),
                z: a.clone(),
                z2: Some(b.clone()),
                value: s.evaluate(&pt) - g.evaluate(&pt),
            });
        }
    }
    let desc = format!("{} (a, b) pairs from {}", pairs.len(), samples.description);
    Ok(ResidualReport::new(&m.label, "unitarity", &desc, "closed", entries, tol))
}
