use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::expr::ClassicalExpr;
use super::ObservableError;
use crate::gaussian::{
    quad_oracle_checked, AffineMap, ExponentBuilder, GaussianError, GaussianFrame, GaussianSum, Poly, DEFAULT_ORDER,
};
use crate::states::{PhasePoint, PlanckParam};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative tolerance of the order-doubling check for opaque integrands.
pub const OPAQUE_TOL: f64 = 1e-10;

fn re(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// Adds the exponent of a coherent profile `phi_(q,p)(X, Y)` (or its conjugate)
/// where every coordinate is a linear combination of builder variables.
pub(crate) fn add_coherent_exponent(
    mut b: ExponentBuilder,
    h: f64,
    x: &[Vec<(usize, f64)>],
    y: &[Vec<(usize, f64)>],
    q: &[usize],
    p: &[usize],
    conj: bool,
) -> ExponentBuilder {
    let sign = if conj { -1.0 } else { 1.0 };
    for k in 0..q.len() {
        for &(v, c) in &x[k] {
            b = b.product(v, q[k], I * (sign * PI * c));
        }
        for &(v, c) in &y[k] {
            b = b.product(v, p[k], I * (sign * PI * c));
        }
        let mut sx = x[k].clone();
        sx.push((p[k], 1.0 / h));
        b = b.square(&sx, 0.0, -PI * h / 2.0);
        let mut sy = y[k].clone();
        sy.push((q[k], -1.0 / h));
        b = b.square(&sy, 0.0, -PI * h / 2.0);
    }
    b
}

type SumCache = Mutex<HashMap<(u64, usize), Arc<GaussianSum>>>;

fn cached_sum(
    cache: &'static OnceLock<SumCache>,
    h: f64,
    n: usize,
    build: impl FnOnce() -> Result<GaussianSum, GaussianError>,
) -> Result<Arc<GaussianSum>, GaussianError> {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = map.lock().expect("cache poisoned").get(&(h.to_bits(), n)) {
        return Ok(v.clone());
    }
    let v = Arc::new(build()?);
    Ok(map.lock().expect("cache poisoned").entry((h.to_bits(), n)).or_insert(v).clone())
}

/// Smearing weight `(2/h)^n exp(-(2 pi / h)|w - z|^2)` over `[w, z]`.
fn smear_weight(h: f64, n: usize) -> GaussianSum {
    let d = 4 * n;
    let mut b = ExponentBuilder::new(d);
    for k in 0..2 * n {
        b = b.square(&[(k, 1.0), (2 * n + k, -1.0)], 0.0, -2.0 * PI / h);
    }
    GaussianSum::from_block(b.build(), Poly::constant(d, re((2.0 / h).powi(n as i32))))
}

/// Matrix-element weight over `[a, b, q1, p1, q2, p2]`:
/// `<P(f) * v_z1, v_z2> = ∫ f(a, b) M(a, b; z1, z2) da db`, with
/// `M = (4/h)^n ∫ e^{2πi(a.ξ + b.η)} e^{-πih(ξ.y - x.η)} phi_z1(x - ξ, y - η) conj(phi_z2(x, y))`.
pub fn matrix_element_weight(h: f64, n: usize) -> Result<Arc<GaussianSum>, ObservableError> {
    PlanckParam::new(h)?;
    static CACHE: OnceLock<SumCache> = OnceLock::new();
    Ok(cached_sum(&CACHE, h, n, || {
        let d = 10 * n;
        let (a, bb, q1, p1, q2, p2, xi, eta, x, y) = (0, n, 2 * n, 3 * n, 4 * n, 5 * n, 6 * n, 7 * n, 8 * n, 9 * n);
        let mut b = ExponentBuilder::new(d);
        for k in 0..n {
            b = b
                .product(a + k, xi + k, I * 2.0 * PI)
                .product(bb + k, eta + k, I * 2.0 * PI)
                .product(xi + k, y + k, -I * PI * h)
                .product(x + k, eta + k, I * PI * h);
        }
        let idx = |base: usize| (0..n).map(|k| base + k).collect::<Vec<_>>();
        let shifted_x: Vec<Vec<(usize, f64)>> = (0..n).map(|k| vec![(x + k, 1.0), (xi + k, -1.0)]).collect();
        let shifted_y: Vec<Vec<(usize, f64)>> = (0..n).map(|k| vec![(y + k, 1.0), (eta + k, -1.0)]).collect();
        b = add_coherent_exponent(b, h, &shifted_x, &shifted_y, &idx(q1), &idx(p1), false);
        let plain_x: Vec<Vec<(usize, f64)>> = (0..n).map(|k| vec![(x + k, 1.0)]).collect();
        let plain_y: Vec<Vec<(usize, f64)>> = (0..n).map(|k| vec![(y + k, 1.0)]).collect();
        b = add_coherent_exponent(b, h, &plain_x, &plain_y, &idx(q2), &idx(p2), true);
        let pref = (4.0 / h).powi(n as i32) * (h / 2.0).powi(2 * n as i32);
        let full = GaussianSum::from_block(b.build(), Poly::constant(d, re(pref)));
        let inner: Vec<usize> = (6 * n..d).collect();
        full.integrate_partial(&inner)
    })?)
}

/// Closed-form smeared symbol `S_f(z)` as a function of `z = (q, p)`.
pub fn smear_sum(f: &ClassicalExpr, h: f64, n: usize) -> Result<GaussianSum, ObservableError> {
    PlanckParam::new(h)?;
    let g = f.to_gaussian(n)?;
    let positions: Vec<usize> = (0..2 * n).collect();
    let w = smear_weight(h, n);
    Ok(g.embed(4 * n, &positions).multiply(&w)?.integrate_partial(&positions)?)
}

/// `<P(f), l_(h,q,p)>`: exact for in-class `f`, Hermite quadrature centred at
/// `(q, p)` with scale `sqrt(h / 4 pi)` otherwise.
pub fn smear_kernel(f: &ClassicalExpr, h: f64, z: &PhasePoint) -> Result<Complex64, ObservableError> {
    PlanckParam::new(h)?;
    let n = z.n().max(f.dof());
    let c = z.coords();
    if f.is_in_class() {
        let g = f.to_gaussian(n)?;
        let mut b = ExponentBuilder::new(2 * n);
        for (k, ck) in c.iter().enumerate() {
            b = b.square(&[(k, 1.0)], -ck, -2.0 * PI / h);
        }
        let w = GaussianSum::from_block(b.build(), Poly::constant(2 * n, re((2.0 / h).powi(n as i32))));
        return Ok(g.multiply(&w)?.integrate_all()?);
    }
    let frame = GaussianFrame::isotropic(c.clone(), (h / (4.0 * PI)).sqrt());
    let pref = (2.0 / h).powi(n as i32);
    let integrand = |w: &[f64]| {
        let d2: f64 = w.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        f.eval(&w[..n], &w[n..]) * (pref * (-2.0 * PI / h * d2).exp())
    };
    let (v, _) = quad_oracle_checked(&integrand, &frame, DEFAULT_ORDER, OPAQUE_TOL)?;
    if !v.is_finite() {
        return Err(ObservableError::Divergent(f.to_string()));
    }
    Ok(v)
}

/// `<P(f) * v_z1, v_z2>` as a closed form in `[q1, p1, q2, p2]`; in-class `f` only.
pub fn matrix_element_sum(f: &ClassicalExpr, h: f64, n: usize) -> Result<GaussianSum, ObservableError> {
    let m = matrix_element_weight(h, n)?;
    let g = f.to_gaussian(n)?;
    let positions: Vec<usize> = (0..2 * n).collect();
    Ok(g.embed(6 * n, &positions).multiply(&m)?.integrate_partial(&positions)?)
}

/// `<P(f) * v_(h,z1), v_(h,z2)>`.
pub fn matrix_element(
    f: &ClassicalExpr,
    h: f64,
    z1: &PhasePoint,
    z2: &PhasePoint,
) -> Result<Complex64, ObservableError> {
    let n = z1.n();
    if z2.n() != n || f.dof() > n {
        return Err(ObservableError::State(crate::states::StateError::DofMismatch(n, z2.n().max(f.dof()))));
    }
    let labels: Vec<f64> = z1.coords().into_iter().chain(z2.coords()).collect();
    // fix the labels, leaving a Gaussian weight in (a, b)
    let m = matrix_element_weight(h, n)?;
    let mut mat = vec![0.0; 6 * n * 2 * n];
    for k in 0..2 * n {
        mat[k * 2 * n + k] = 1.0;
    }
    let mut shift = vec![0.0; 6 * n];
    shift[2 * n..].copy_from_slice(&labels);
    let fixed = m.substitute_affine(&AffineMap::new(6 * n, 2 * n, mat, shift))?;
    if f.is_in_class() {
        return Ok(f.to_gaussian(n)?.multiply(&fixed)?.integrate_all()?);
    }
    let e = &fixed.blocks()[0].exponent;
    let vars: Vec<usize> = (0..2 * n).collect();
    let re_lin: Vec<f64> = e.lin().iter().map(|v| v.re).collect();
    let frame = GaussianFrame::from_quadratic(2 * n, &e.real_block(&vars), &re_lin)?;
    let integrand = |w: &[f64]| f.eval(&w[..n], &w[n..]) * fixed.evaluate(w);
    let (v, _) = quad_oracle_checked(&integrand, &frame, DEFAULT_ORDER, OPAQUE_TOL)?;
    if !v.is_finite() {
        return Err(ObservableError::Divergent(f.to_string()));
    }
    Ok(v)
}

/// Diagonal matrix element `<P(f) * v_z, v_z>`.
pub fn expectation_vector(f: &ClassicalExpr, h: f64, z: &PhasePoint) -> Result<Complex64, ObservableError> {
    matrix_element(f, h, z, z)
}

/// `f(q, p)`: the `h -> 0` limit of the expectation.
pub fn classical_eval(f: &ClassicalExpr, z: &PhasePoint) -> Result<Complex64, ObservableError> {
    let v = f.eval(&z.q, &z.p);
    if !v.is_finite() {
        return Err(ObservableError::Singular { q: z.q.clone(), p: z.p.clone() });
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub h: f64,
    #[serde(with = "crate::json::complex")]
    pub expectation: Complex64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSweep {
    pub rows: Vec<LimitRow>,
    /// Least-squares slope of `difference` against `h`.
    pub slope: f64,
    pub intercept: f64,
}

/// Expectation values along a list of `h`, compared with the classical value.
pub fn classical_sweep(f: &ClassicalExpr, z: &PhasePoint, hs: &[f64]) -> Result<LimitSweep, ObservableError> {
    let classical = classical_eval(f, z)?;
    let rows: Vec<LimitRow> = hs
        .iter()
        .map(|&h| {
            let e = expectation_vector(f, h, z)?;
            Ok(LimitRow { h, expectation: e, difference: (e - classical).norm() })
        })
        .collect::<Result<_, ObservableError>>()?;
    let (slope, intercept) = linear_fit(&rows.iter().map(|r| (r.h, r.difference)).collect::<Vec<_>>());
    Ok(LimitSweep { rows, slope, intercept })
}

fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (0.0, pts.first().map(|p| p.1).unwrap_or(0.0));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}
