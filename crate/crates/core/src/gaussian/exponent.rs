use num_complex::Complex64;

use super::poly::Poly;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Quadratic exponent `x^T A x + b^T x + c` over `dim` real variables.
///
/// `A` is stored row-major and kept exactly symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct Exponent {
    dim: usize,
    quad: Vec<Complex64>,
    lin: Vec<Complex64>,
    constant: Complex64,
}

impl Exponent {
    pub fn zero(dim: usize) -> Self {
        Self { dim, quad: vec![ZERO; dim * dim], lin: vec![ZERO; dim], constant: ZERO }
    }

    /// Builds an exponent from a (not necessarily symmetric) matrix; the
    /// symmetric part is stored.
    pub fn new(dim: usize, quad: Vec<Complex64>, lin: Vec<Complex64>, constant: Complex64) -> Self {
        assert_eq!(quad.len(), dim * dim, "quadratic form must be dim x dim");
        assert_eq!(lin.len(), dim, "linear part must have dim entries");
        let mut e = Self { dim, quad, lin, constant };
        e.symmetrize();
        e
    }

    fn symmetrize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in (i + 1)..d {
                let s = (self.quad[i * d + j] + self.quad[j * d + i]) * 0.5;
                self.quad[i * d + j] = s;
                self.quad[j * d + i] = s;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn quad(&self, i: usize, j: usize) -> Complex64 {
        self.quad[i * self.dim + j]
    }

    pub fn quad_matrix(&self) -> &[Complex64] {
        &self.quad
    }

    pub fn lin(&self) -> &[Complex64] {
        &self.lin
    }

    pub fn constant(&self) -> Complex64 {
        self.constant
    }

    pub fn with_constant(mut self, c: Complex64) -> Self {
        self.constant = c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let d = self.dim;
        let mut v = self.constant;
        for i in 0..d {
            if x[i] == 0.0 {
                continue;
            }
            let mut row = self.lin[i];
            row += self.quad[i * d + i] * x[i];
            for j in (i + 1)..d {
                row += self.quad[i * d + j] * (2.0 * x[j]);
            }
            v += row * x[i];
        }
        v
    }

    pub fn add(&self, other: &Exponent) -> Exponent {
        debug_assert_eq!(self.dim, other.dim);
        Exponent {
            dim: self.dim,
            quad: self.quad.iter().zip(&other.quad).map(|(a, b)| a + b).collect(),
            lin: self.lin.iter().zip(&other.lin).map(|(a, b)| a + b).collect(),
            constant: self.constant + other.constant,
        }
    }

    pub fn conj(&self) -> Exponent {
        Exponent {
            dim: self.dim,
            quad: self.quad.iter().map(|a| a.conj()).collect(),
            lin: self.lin.iter().map(|a| a.conj()).collect(),
            constant: self.constant.conj(),
        }
    }

    /// Equality of the quadratic and linear data up to an absolute tolerance.
    pub fn same_shape(&self, other: &Exponent, tol: f64) -> bool {
        self.dim == other.dim
            && self.quad.iter().zip(&other.quad).all(|(a, b)| (a - b).norm() <= tol)
            && self.lin.iter().zip(&other.lin).all(|(a, b)| (a - b).norm() <= tol)
    }

    /// Real part of the restriction of `A` to `vars`, row-major.
    pub fn real_block(&self, vars: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(vars.len() * vars.len());
        for &i in vars {
            for &j in vars {
                out.push(self.quad(i, j).re);
            }
        }
        out
    }

    /// Gradient `2 A x + b` as affine polynomials, one per variable.
    pub fn gradient(&self, var: usize) -> Poly {
        let d = self.dim;
        let coeffs: Vec<(usize, Complex64)> =
            (0..d).filter(|&j| self.quad[var * d + j] != ZERO).map(|j| (j, self.quad[var * d + j] * 2.0)).collect();
        Poly::affine(d, &coeffs, self.lin[var])
    }

    /// Places old variable `i` at position `positions[i]` of a `new_dim` space.
    pub fn embed(&self, new_dim: usize, positions: &[usize]) -> Exponent {
        let mut out = Exponent::zero(new_dim);
        let d = self.dim;
        for i in 0..d {
            out.lin[positions[i]] += self.lin[i];
            for j in 0..d {
                out.quad[positions[i] * new_dim + positions[j]] += self.quad[i * d + j];
            }
        }
        out.constant = self.constant;
        out
    }
}

/// Incremental construction of an [`Exponent`] from sums of squares and
/// cross terms.
#[derive(Clone, Debug)]
pub struct ExponentBuilder {
    dim: usize,
    quad: Vec<Complex64>,
    lin: Vec<Complex64>,
    constant: Complex64,
}

impl ExponentBuilder {
    pub fn new(dim: usize) -> Self {
        Self { dim, quad: vec![ZERO; dim * dim], lin: vec![ZERO; dim], constant: ZERO }
    }

    /// Adds `c * x_i * x_j`.
    pub fn product(mut self, i: usize, j: usize, c: impl Into<Complex64>) -> Self {
        let c = c.into();
        if i == j {
            self.quad[i * self.dim + i] += c;
        } else {
            self.quad[i * self.dim + j] += c * 0.5;
            self.quad[j * self.dim + i] += c * 0.5;
        }
        self
    }

    /// Adds `c * x_i`.
    pub fn linear(mut self, i: usize, c: impl Into<Complex64>) -> Self {
        self.lin[i] += c.into();
        self
    }

    pub fn constant(mut self, c: impl Into<Complex64>) -> Self {
        self.constant += c.into();
        self
    }

    /// Adds `factor * (shift + sum_k coeff_k x_k)^2`.
    pub fn square(mut self, terms: &[(usize, f64)], shift: impl Into<Complex64>, factor: impl Into<Complex64>) -> Self {
        let shift = shift.into();
        let factor = factor.into();
        for &(i, ci) in terms {
            for &(j, cj) in terms {
                self.quad[i * self.dim + j] += factor * (ci * cj);
            }
            self.lin[i] += factor * shift * (2.0 * ci);
        }
        self.constant += factor * shift * shift;
        self
    }

    pub fn build(self) -> Exponent {
        Exponent::new(self.dim, self.quad, self.lin, self.constant)
    }
}
