use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use super::hermite::HermiteRule;
use super::sum::GaussianSum;
use super::GaussianError;

/// Default Hermite order per axis.
pub const DEFAULT_ORDER: usize = 32;

/// Affine frame `x = center + L y` in which the integrand is close to `exp(-|y|^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFrame {
    pub center: Vec<f64>,
    /// Row-major `dim x dim`.
    pub transform: Vec<f64>,
}

impl GaussianFrame {
    /// Isotropic frame: `x = center + scale * sqrt(2) * y`, matching a weight
    /// `exp(-|x - center|^2 / (2 scale^2))`.
    pub fn isotropic(center: Vec<f64>, scale: f64) -> Self {
        let d = center.len();
        let mut t = vec![0.0; d * d];
        for i in 0..d {
            t[i * d + i] = scale * std::f64::consts::SQRT_2;
        }
        Self { center, transform: t }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Frame adapted to `exp(x^T A x + b^T x)` using only the real parts.
    pub fn from_quadratic(dim: usize, re_quad: &[f64], re_lin: &[f64]) -> Result<Self, GaussianError> {
        let r = DMatrix::from_row_slice(dim, dim, re_quad);
        let neg = -&r;
        let eig = neg.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(GaussianError::NotIntegrable { vars: (0..dim).collect() });
        }
        let chol = neg.cholesky().ok_or(GaussianError::NotIntegrable { vars: (0..dim).collect() })?;
        // -2 R mu = b  ->  mu = (2 (-R))^{-1} b
        let mu = chol.solve(&DVector::from_row_slice(re_lin)) * 0.5;
        let mut t = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                t[i * dim + j] = eig.eigenvectors[(i, j)] / eig.eigenvalues[j].sqrt();
            }
        }
        Ok(Self { center: mu.iter().copied().collect(), transform: t })
    }

    fn jacobian(&self) -> f64 {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.transform).determinant().abs()
    }

    fn map(&self, y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut v = self.center[i];
            for j in 0..d {
                v += self.transform[i * d + j] * y[j];
            }
            out[i] = v;
        }
    }
}

/// Tensor-product Gauss–Hermite approximation of `∫ f(x) dx` in the given frame.
pub fn quad_oracle_fn<F>(f: &F, frame: &GaussianFrame, rule: &HermiteRule) -> Complex64
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let d = frame.dim();
    let n = rule.order;
    if d == 0 {
        return f(&[]);
    }
    let inner = n.pow(d as u32 - 1);
    // node weight times exp(y^2), so that the frame weight is divided out
    let adj: Vec<f64> = rule.nodes.iter().zip(&rule.weights).map(|(y, w)| w * (y * y).exp()).collect();
    let partials: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|i0| {
            let mut y = vec![0.0; d];
            let mut x = vec![0.0; d];
            let mut acc = Complex64::new(0.0, 0.0);
            for rest in 0..inner {
                let mut w = adj[i0];
                y[0] = rule.nodes[i0];
                let mut r = rest;
                for yk in y.iter_mut().skip(1) {
                    let ik = r % n;
                    r /= n;
                    *yk = rule.nodes[ik];
                    w *= adj[ik];
                }
                frame.map(&y, &mut x);
                acc += f(&x) * w;
            }
            acc
        })
        .collect();
    partials.into_iter().sum::<Complex64>() * frame.jacobian()
}

/// Quadrature with an order-doubling check; returns the finer value and the
/// observed difference.
pub fn quad_oracle_checked<F>(
    f: &F,
    frame: &GaussianFrame,
    order: usize,
    tol: f64,
) -> Result<(Complex64, f64), GaussianError>
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let coarse = quad_oracle_fn(f, frame, &HermiteRule::new(order));
    let fine = quad_oracle_fn(f, frame, &HermiteRule::new(2 * order));
    let err = (fine - coarse).norm();
    if err > tol * fine.norm().max(1.0) {
        return Err(GaussianError::OrderTooSmall { order, difference: err });
    }
    Ok((fine, err))
}

/// Quadrature of a closed-form sum, one frame per block adapted to its Gaussian.
pub fn quad_oracle_sum(sum: &GaussianSum, rule: &HermiteRule) -> Result<Complex64, GaussianError> {
    let d = sum.dim();
    let mut total = Complex64::new(0.0, 0.0);
    for b in sum.blocks() {
        let e = &b.exponent;
        let vars: Vec<usize> = (0..d).collect();
        let re_quad = e.real_block(&vars);
        let re_lin: Vec<f64> = e.lin().iter().map(|v| v.re).collect();
        let frame = GaussianFrame::from_quadratic(d, &re_quad, &re_lin)?;
        let f = |x: &[f64]| b.poly.eval(x) * e.eval(x).exp();
        total += quad_oracle_fn(&f, &frame, rule);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::ExponentBuilder;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_order_eight() {
        let r = HermiteRule::new(8);
        let frame = GaussianFrame { center: vec![0.0], transform: vec![1.0] };
        let v = quad_oracle_fn(&|x: &[f64]| Complex64::new((-x[0] * x[0]).exp(), 0.0), &frame, &r);
        assert!((v.re - PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn frame_tracks_shifted_block() {
        let e = ExponentBuilder::new(2)
            .product(0, 0, -2.0)
            .product(0, 1, 0.6)
            .product(1, 1, -1.0)
            .linear(0, Complex64::new(1.0, 0.3))
            .linear(1, -0.5)
            .build();
        let s = GaussianSum::term(Complex64::new(1.0, 0.0), vec![2, 1], e);
        let exact = s.integrate_all().unwrap();
        let q = quad_oracle_sum(&s, &HermiteRule::new(24)).unwrap();
        assert!((exact - q).norm() < 1e-12 * exact.norm());
    }

    #[test]
    fn opaque_integrand_is_stable() {
        let frame = GaussianFrame::isotropic(vec![2.0, 1.5], 0.5 / 2f64.sqrt());
        let f = |x: &[f64]| {
            let g = (-((x[0] - 2.0).powi(2) + (x[1] - 1.5).powi(2)) * 4.0).exp();
            Complex64::new((x[0] + x[1]).abs().ln() * g, 0.0)
        };
        let (v, err) = quad_oracle_checked(&f, &frame, 16, 1e-6).unwrap();
        assert!(v.re.is_finite() && err < 1e-6);
    }
}
