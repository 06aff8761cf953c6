use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;

use super::coherent::{coherent_kernel, coherent_vector, inner_hh, inner_kernel};
use super::{HhVector, PhasePoint, StateError};
use crate::gaussian::{quad_oracle_fn, GaussianFrame, HermiteRule};

type Cache = Mutex<HashMap<(u64, usize), f64>>;

fn cached(cache: &'static OnceLock<Cache>, h: f64, n: usize, compute: impl FnOnce() -> f64) -> f64 {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (h.to_bits(), n);
    if let Some(&v) = map.lock().expect("frame cache poisoned").get(&key) {
        return v;
    }
    let v = compute();
    *map.lock().expect("frame cache poisoned").entry(key).or_insert(v)
}

fn measure(h: f64, n: usize, pair: impl Fn(&PhasePoint) -> Complex64 + Sync) -> f64 {
    // |<s_0, s_z>|^2 decays like exp(-(pi/h)|z|^2); match the frame to it
    let scale = (h / (2.0 * std::f64::consts::PI)).sqrt();
    let frame = GaussianFrame::isotropic(vec![0.0; 2 * n], scale);
    let f = |z: &[f64]| Complex64::new(pair(&PhasePoint::from_coords(z)).norm_sqr(), 0.0);
    quad_oracle_fn(&f, &frame, &HermiteRule::new(24)).re
}

/// Measured `c_h` with `c_h ∫ |<v_0, v_z>|^2 dz = 1`; computed once per `(h, n)`.
pub fn frame_constant(h: f64, n: usize) -> Result<f64, StateError> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let v0 = coherent_vector(h, &PhasePoint::new(vec![0.0; n], vec![0.0; n])?)?;
    Ok(cached(&CACHE, h, n, || {
        let total = measure(h, n, |z| {
            let vz = coherent_vector(h, z).expect("valid point");
            inner_hh(&v0, &vz).expect("integrable")
        });
        1.0 / total
    }))
}

/// Measured constant `c` with `c ∫ |<l_0, l_w>|^2 dw = 1` for the kernel family.
pub fn kernel_frame_constant(h: f64, n: usize) -> Result<f64, StateError> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let l0 = coherent_kernel(h, &PhasePoint::new(vec![0.0; n], vec![0.0; n])?)?;
    if !l0.is_normalizable() {
        return Err(StateError::NotNormalizable);
    }
    Ok(cached(&CACHE, h, n, || {
        let total = measure(h, n, |w| {
            let lw = coherent_kernel(h, w).expect("valid point");
            inner_kernel(&l0, &lw).expect("integrable")
        });
        1.0 / total
    }))
}

/// Square grid of radius `radius` and spacing `spacing` in one degree of freedom,
/// with the trapezoid cell weight.
pub fn phase_grid(radius: f64, spacing: f64) -> (Vec<PhasePoint>, f64) {
    let k = (radius / spacing).round() as i64;
    let mut pts = Vec::with_capacity(((2 * k + 1) * (2 * k + 1)) as usize);
    for i in -k..=k {
        for j in -k..=k {
            pts.push(PhasePoint::one(i as f64 * spacing, j as f64 * spacing));
        }
    }
    (pts, spacing * spacing)
}

/// Coefficients `<v, v_z>` over a grid together with the measured frame constant.
#[derive(Debug, Clone)]
pub struct CoherentExpansion {
    pub h: f64,
    pub grid: Vec<PhasePoint>,
    pub cell_weight: f64,
    pub coeffs: Vec<Complex64>,
    pub frame_constant: f64,
    /// Sup-norm residual of the reconstruction at the check points.
    pub residual: f64,
}

impl CoherentExpansion {
    /// `c_h * sum_z w <v, v_z> v_z(x, y)`.
    pub fn reconstruct(&self, x: &[f64], y: &[f64]) -> Complex64 {
        let pt: Vec<f64> = x.iter().chain(y).copied().collect();
        self.grid
            .iter()
            .zip(&self.coeffs)
            .map(|(z, c)| c * coherent_vector(self.h, z).expect("valid point").profile.evaluate(&pt))
            .sum::<Complex64>()
            * (self.frame_constant * self.cell_weight)
    }
}

fn check_points(n: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if n == 1 { (0..9).map(|i| -2.0 + 0.5 * i as f64).collect() } else { vec![-1.0, 0.0, 1.0] };
    let d = 2 * n;
    let total = axis.len().pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let v = axis[idx % axis.len()];
                    idx /= axis.len();
                    v
                })
                .collect()
        })
        .collect()
}

/// Expands `v` over the coherent family on `grid` and verifies the
/// reconstruction at fixed check points; fails when the residual exceeds `tol`.
pub fn expand_in_coherent(
    v: &HhVector,
    grid: &[PhasePoint],
    cell_weight: f64,
    tol: f64,
) -> Result<CoherentExpansion, StateError> {
    let h = v.h.value();
    let c = frame_constant(h, v.n)?;
    let coeffs: Vec<Complex64> =
        grid.par_iter().map(|z| inner_hh(v, &coherent_vector(h, z)?)).collect::<Result<_, _>>()?;
    let mut exp = CoherentExpansion { h, grid: grid.to_vec(), cell_weight, coeffs, frame_constant: c, residual: 0.0 };
    let n = v.n;
    let basis: Vec<_> = grid.iter().map(|z| coherent_vector(h, z)).collect::<Result<_, _>>()?;
    let residual = check_points(n)
        .par_iter()
        .map(|pt| {
            let rec: Complex64 =
                basis.iter().zip(&exp.coeffs).map(|(b, c)| c * b.profile.evaluate(pt)).sum::<Complex64>()
                    * (c * cell_weight);
            (rec - v.profile.evaluate(pt)).norm()
        })
        .reduce(|| 0.0, f64::max);
    exp.residual = residual;
    if residual > tol {
        return Err(StateError::GridTooCoarse { residual, tol });
    }
    Ok(exp)
}
