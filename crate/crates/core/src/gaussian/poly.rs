use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use num_complex::Complex64;

/// Exponent vector of a monomial `x_0^e_0 * x_1^e_1 * ...`.
pub type Monomial = Vec<u32>;

/// Sparse multivariate polynomial with complex coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<Monomial, Complex64>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: Complex64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; dim], c);
        p
    }

    pub fn monomial(mono: Monomial, c: Complex64) -> Self {
        let mut p = Self::zero(mono.len());
        p.add_term(mono, c);
        p
    }

    /// `x_var`.
    pub fn variable(dim: usize, var: usize) -> Self {
        let mut mono = vec![0; dim];
        mono[var] = 1;
        Self::monomial(mono, Complex64::new(1.0, 0.0))
    }

    /// `offset + sum_k coeffs[k] * x_k`.
    pub fn affine(dim: usize, coeffs: &[(usize, Complex64)], offset: Complex64) -> Self {
        let mut p = Self::constant(dim, offset);
        for &(k, c) in coeffs {
            let mut mono = vec![0; dim];
            mono[k] = 1;
            p.add_term(mono, c);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Complex64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.iter().sum()).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, mono: Monomial, c: Complex64) {
        debug_assert_eq!(mono.len(), self.dim);
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        match self.terms.entry(mono) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == Complex64::new(0.0, 0.0) {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn add_assign(&mut self, other: &Poly) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), *c);
        }
    }

    pub fn scale(&self, c: Complex64) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (m, v) in &self.terms {
            out.add_term(m.clone(), v * c);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m: Monomial = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                out.add_term(m, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut out = Poly::constant(self.dim, Complex64::new(1.0, 0.0));
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn conj(&self) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.conj());
        }
        out
    }

    pub fn derivative(&self, var: usize) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (m, c) in &self.terms {
            if m[var] > 0 {
                let mut dm = m.clone();
                dm[var] -= 1;
                out.add_term(dm, c * m[var] as f64);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut v = *c;
                for (xi, &e) in x.iter().zip(m) {
                    if e > 0 {
                        v *= xi.powi(e as i32);
                    }
                }
                v
            })
            .sum()
    }

    /// Constant coefficient (value at the origin).
    pub fn constant_term(&self) -> Complex64 {
        self.terms.get(&vec![0; self.dim]).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Splits by the power of `var`: returns `P_k` with `P = sum_k x_var^k P_k`,
    /// where each `P_k` lives in `dim - 1` variables (with `var` removed).
    pub fn split_by(&self, var: usize) -> BTreeMap<u32, Poly> {
        let mut out: BTreeMap<u32, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            let mut rest = m.clone();
            let k = rest.remove(var);
            out.entry(k).or_insert_with(|| Poly::zero(self.dim - 1)).add_term(rest, *c);
        }
        out
    }

    /// Replaces each variable `x_i` by the polynomial `subs[i]` (all in a common
    /// target dimension).
    pub fn compose(&self, subs: &[Poly], target_dim: usize) -> Poly {
        debug_assert_eq!(subs.len(), self.dim);
        let mut cache: Vec<Vec<Poly>> =
            subs.iter().map(|s| vec![Poly::constant(target_dim, Complex64::new(1.0, 0.0)), s.clone()]).collect();
        let mut out = Poly::zero(target_dim);
        for (m, c) in &self.terms {
            let mut acc = Poly::constant(target_dim, *c);
            for (i, &e) in m.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while cache[i].len() <= e as usize {
                    let next = cache[i].last().unwrap().mul(&subs[i]);
                    cache[i].push(next);
                }
                acc = acc.mul(&cache[i][e as usize]);
            }
            out.add_assign(&acc);
        }
        out
    }

    /// Inserts new variables (with exponent zero) so that old variable `i`
    /// sits at position `positions[i]` of a `new_dim`-variable polynomial.
    pub fn embed(&self, new_dim: usize, positions: &[usize]) -> Poly {
        let mut out = Poly::zero(new_dim);
        for (m, c) in &self.terms {
            let mut nm = vec![0; new_dim];
            for (i, &e) in m.iter().enumerate() {
                nm[positions[i]] += e;
            }
            out.add_term(nm, *c);
        }
        out
    }
}
