use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::exponent::Exponent;
use super::poly::{Monomial, Poly};
use super::GaussianError;

/// Absolute tolerance on exponent data below which two blocks merge.
pub const MERGE_TOL: f64 = 1e-12;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// `poly(x) * exp(exponent(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBlock {
    pub exponent: Exponent,
    pub poly: Poly,
}

/// One `coeff * x^monomial * exp(x^T A x + b^T x + c)` term of a sum, as a view.
#[derive(Clone, Debug)]
pub struct GaussianTerm<'a> {
    pub coeff: Complex64,
    pub monomial: &'a Monomial,
    pub exponent: &'a Exponent,
}

impl GaussianTerm<'_> {
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let mut v = self.coeff * self.exponent.eval(x).exp();
        for (xi, &e) in x.iter().zip(self.monomial) {
            v *= xi.powi(e as i32);
        }
        v
    }
}

/// Affine change of variables `x = M y + t`, with `M` of shape `out_dim x in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub out_dim: usize,
    pub in_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub matrix: Vec<f64>,
    pub shift: Vec<f64>,
}

impl AffineMap {
    pub fn new(out_dim: usize, in_dim: usize, matrix: Vec<f64>, shift: Vec<f64>) -> Self {
        assert_eq!(matrix.len(), out_dim * in_dim);
        assert_eq!(shift.len(), out_dim);
        Self { out_dim, in_dim, matrix, shift }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        Self::new(dim, dim, m, vec![0.0; dim])
    }

    pub fn translation(shift: Vec<f64>) -> Self {
        let mut a = Self::identity(shift.len());
        a.shift = shift;
        a
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        (0..self.out_dim)
            .map(|i| self.shift[i] + (0..self.in_dim).map(|k| self.matrix[i * self.in_dim + k] * y[k]).sum::<f64>())
            .collect()
    }
}

/// Finite sum of polynomial-times-Gaussian blocks over `dim` real variables.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSum {
    dim: usize,
    blocks: Vec<GaussianBlock>,
}

impl GaussianSum {
    pub fn zero(dim: usize) -> Self {
        Self { dim, blocks: Vec::new() }
    }

    pub fn from_exponent(exponent: Exponent) -> Self {
        let dim = exponent.dim();
        Self::from_block(exponent, Poly::constant(dim, ONE))
    }

    pub fn from_block(exponent: Exponent, poly: Poly) -> Self {
        assert_eq!(exponent.dim(), poly.dim());
        let mut s = Self::zero(exponent.dim());
        s.push(GaussianBlock { exponent, poly });
        s
    }

    /// The constant function `c`.
    pub fn constant(dim: usize, c: Complex64) -> Self {
        Self::from_block(Exponent::zero(dim), Poly::constant(dim, c))
    }

    /// `coeff * x^monomial * exp(quad, lin, c)` built from raw term data.
    pub fn term(coeff: Complex64, monomial: Monomial, exponent: Exponent) -> Self {
        Self::from_block(exponent, Poly::monomial(monomial, coeff))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[GaussianBlock] {
        &self.blocks
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = GaussianTerm<'_>> {
        self.blocks.iter().flat_map(|b| {
            b.poly.terms().map(move |(m, c)| GaussianTerm { coeff: *c, monomial: m, exponent: &b.exponent })
        })
    }

    /// Adds a block, merging it into an existing block with the same exponent.
    pub fn push(&mut self, block: GaussianBlock) {
        assert_eq!(block.exponent.dim(), self.dim, "block dimension");
        if block.poly.is_zero() {
            return;
        }
        let found = self.blocks.iter().position(|b| {
            b.exponent.same_shape(&block.exponent, MERGE_TOL)
                && (b.exponent.constant() - block.exponent.constant()).norm() <= MERGE_TOL
        });
        match found {
            Some(i) => {
                self.blocks[i].poly.add_assign(&block.poly);
                if self.blocks[i].poly.is_zero() {
                    self.blocks.remove(i);
                }
            }
            None => self.blocks.push(block),
        }
    }

    fn check_dim(&self, other: &GaussianSum) -> Result<(), GaussianError> {
        if self.dim != other.dim {
            return Err(GaussianError::DimensionMismatch { left: self.dim, right: other.dim });
        }
        Ok(())
    }

    pub fn add(&self, other: &GaussianSum) -> Result<GaussianSum, GaussianError> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for b in &other.blocks {
            out.push(b.clone());
        }
        Ok(out)
    }

    pub fn scale(&self, c: Complex64) -> GaussianSum {
        let mut out = GaussianSum::zero(self.dim);
        for b in &self.blocks {
            out.push(GaussianBlock { exponent: b.exponent.clone(), poly: b.poly.scale(c) });
        }
        out
    }

    pub fn conj(&self) -> GaussianSum {
        GaussianSum {
            dim: self.dim,
            blocks: self
                .blocks
                .iter()
                .map(|b| GaussianBlock { exponent: b.exponent.conj(), poly: b.poly.conj() })
                .collect(),
        }
    }

    /// Pointwise product.
    pub fn multiply(&self, other: &GaussianSum) -> Result<GaussianSum, GaussianError> {
        self.check_dim(other)?;
        let mut out = GaussianSum::zero(self.dim);
        for a in &self.blocks {
            for b in &other.blocks {
                out.push(GaussianBlock { exponent: a.exponent.add(&b.exponent), poly: a.poly.mul(&b.poly) });
            }
        }
        Ok(out)
    }

    /// Multiplies every block by a polynomial.
    pub fn mul_poly(&self, p: &Poly) -> GaussianSum {
        assert_eq!(p.dim(), self.dim);
        let mut out = GaussianSum::zero(self.dim);
        for b in &self.blocks {
            out.push(GaussianBlock { exponent: b.exponent.clone(), poly: b.poly.mul(p) });
        }
        out
    }

    pub fn evaluate(&self, x: &[f64]) -> Complex64 {
        assert_eq!(x.len(), self.dim, "evaluation point dimension");
        self.blocks.iter().map(|b| b.poly.eval(x) * b.exponent.eval(x).exp()).sum()
    }

    /// `d/dx_var`, using `(P e^E)' = (P' + P E') e^E`.
    pub fn differentiate(&self, var: usize) -> GaussianSum {
        assert!(var < self.dim);
        let mut out = GaussianSum::zero(self.dim);
        for b in &self.blocks {
            let mut p = b.poly.derivative(var);
            p.add_assign(&b.poly.mul(&b.exponent.gradient(var)));
            out.push(GaussianBlock { exponent: b.exponent.clone(), poly: p });
        }
        out
    }

    /// Composition `a(M y + t)` as a sum over `y`; no Jacobian is applied.
    pub fn substitute_affine(&self, map: &AffineMap) -> Result<GaussianSum, GaussianError> {
        if map.out_dim != self.dim {
            return Err(GaussianError::DimensionMismatch { left: self.dim, right: map.out_dim });
        }
        let (m, k) = (map.out_dim, map.in_dim);
        let subs: Vec<Poly> = (0..m)
            .map(|i| {
                let coeffs: Vec<(usize, Complex64)> = (0..k)
                    .filter(|&j| map.matrix[i * k + j] != 0.0)
                    .map(|j| (j, Complex64::new(map.matrix[i * k + j], 0.0)))
                    .collect();
                Poly::affine(k, &coeffs, Complex64::new(map.shift[i], 0.0))
            })
            .collect();
        let mut out = GaussianSum::zero(k);
        for b in &self.blocks {
            let e = &b.exponent;
            let mut quad = vec![Complex64::new(0.0, 0.0); k * k];
            let mut lin = vec![Complex64::new(0.0, 0.0); k];
            // A t
            let at: Vec<Complex64> = (0..m).map(|i| (0..m).map(|j| e.quad(i, j) * map.shift[j]).sum()).collect();
            let mut constant = e.constant();
            for i in 0..m {
                constant += (at[i] + e.lin()[i]) * map.shift[i];
            }
            for a in 0..k {
                for i in 0..m {
                    let mia = map.matrix[i * k + a];
                    if mia == 0.0 {
                        continue;
                    }
                    lin[a] += (at[i] * 2.0 + e.lin()[i]) * mia;
                    for bb in 0..k {
                        let mut s = Complex64::new(0.0, 0.0);
                        for j in 0..m {
                            let mjb = map.matrix[j * k + bb];
                            if mjb != 0.0 {
                                s += e.quad(i, j) * mjb;
                            }
                        }
                        quad[a * k + bb] += s * mia;
                    }
                }
            }
            out.push(GaussianBlock { exponent: Exponent::new(k, quad, lin, constant), poly: b.poly.compose(&subs, k) });
        }
        Ok(out)
    }

    /// Places variable `i` at `positions[i]` of a larger variable set.
    pub fn embed(&self, new_dim: usize, positions: &[usize]) -> GaussianSum {
        let mut out = GaussianSum::zero(new_dim);
        for b in &self.blocks {
            out.push(GaussianBlock {
                exponent: b.exponent.embed(new_dim, positions),
                poly: b.poly.embed(new_dim, positions),
            });
        }
        out
    }

    /// Checks that `Re A` restricted to `vars` is negative definite in every block.
    pub fn check_integrable(&self, vars: &[usize]) -> Result<(), GaussianError> {
        for b in &self.blocks {
            let n = vars.len();
            if n == 0 {
                continue;
            }
            let block = b.exponent.real_block(vars);
            let neg = DMatrix::from_row_slice(n, n, &block).map(|v| -v);
            let finite = neg.iter().all(|v| v.is_finite());
            if !finite || neg.cholesky().is_none() {
                return Err(GaussianError::NotIntegrable { vars: vars.to_vec() });
            }
        }
        Ok(())
    }

    /// Integrates out `vars`; the result lives in the remaining variables, in order.
    pub fn integrate_partial(&self, vars: &[usize]) -> Result<GaussianSum, GaussianError> {
        let mut vars: Vec<usize> = vars.to_vec();
        vars.sort_unstable();
        vars.dedup();
        if let Some(&v) = vars.iter().find(|&&v| v >= self.dim) {
            return Err(GaussianError::DimensionMismatch { left: self.dim, right: v + 1 });
        }
        self.check_integrable(&vars)?;
        let mut cur = self.clone();
        for &v in vars.iter().rev() {
            cur = cur.integrate_one(v)?;
        }
        Ok(cur)
    }

    pub fn integrate_all(&self) -> Result<Complex64, GaussianError> {
        let all: Vec<usize> = (0..self.dim).collect();
        let r = self.integrate_partial(&all)?;
        Ok(r.blocks.iter().map(|b| b.poly.constant_term() * b.exponent.constant().exp()).sum())
    }

    fn integrate_one(&self, j: usize) -> Result<GaussianSum, GaussianError> {
        let d = self.dim;
        let mut out = GaussianSum::zero(d - 1);
        for b in &self.blocks {
            let e = &b.exponent;
            let alpha = -e.quad(j, j);
            if alpha.re <= 0.0 {
                return Err(GaussianError::NotIntegrable { vars: vec![j] });
            }
            let bj = e.lin()[j];
            // mu(x) = (b_j + 2 sum_k A_jk x_k) / (2 alpha), an affine form in the rest
            let mut mu_coeffs = Vec::new();
            for k in 0..d {
                if k != j && e.quad(j, k) != Complex64::new(0.0, 0.0) {
                    mu_coeffs.push((k, e.quad(j, k) / alpha));
                }
            }
            let mu = Poly::affine(d, &mu_coeffs, bj / (alpha * 2.0));
            let subs: Vec<Poly> = (0..d)
                .map(|k| {
                    if k == j {
                        let mut s = mu.clone();
                        s.add_assign(&Poly::variable(d, j));
                        s
                    } else {
                        Poly::variable(d, k)
                    }
                })
                .collect();
            let shifted = b.poly.compose(&subs, d);
            let base = (Complex64::new(PI, 0.0) / alpha).sqrt();
            let mut poly = Poly::zero(d - 1);
            for (power, coeff_poly) in shifted.split_by(j) {
                if power % 2 == 1 {
                    continue;
                }
                let r = power / 2;
                let dfact: f64 = (1..=r).map(|i| (2 * i - 1) as f64).product();
                let moment = base * dfact / (alpha * 2.0).powu(r);
                poly.add_assign(&coeff_poly.scale(moment));
            }
            let rest: Vec<usize> = (0..d).filter(|&k| k != j).collect();
            let mut quad = vec![Complex64::new(0.0, 0.0); (d - 1) * (d - 1)];
            let mut lin = vec![Complex64::new(0.0, 0.0); d - 1];
            for (a, &k) in rest.iter().enumerate() {
                lin[a] = e.lin()[k] + bj * e.quad(j, k) / alpha;
                for (bb, &l) in rest.iter().enumerate() {
                    quad[a * (d - 1) + bb] = e.quad(k, l) + e.quad(j, k) * e.quad(j, l) / alpha;
                }
            }
            let constant = e.constant() + bj * bj / (alpha * 4.0);
            out.push(GaussianBlock { exponent: Exponent::new(d - 1, quad, lin, constant), poly });
        }
        Ok(out)
    }
}
