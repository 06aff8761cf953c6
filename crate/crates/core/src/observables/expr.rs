use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use super::ObservableError;
use crate::gaussian::{Exponent, GaussianSum, Poly};

/// Declared growth of an opaque callback along the real phase space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GrowthBound {
    Polynomial,
    Exponential,
    /// Faster than any exponential; smearing would diverge.
    Super,
}

pub type OpaqueFn = Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coord {
    Q,
    P,
}

/// Affine form `offset + sum_k cq_k q_k + sum_k cp_k p_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearForm {
    pub q: Vec<Complex64>,
    pub p: Vec<Complex64>,
    pub offset: Complex64,
}

impl LinearForm {
    fn eval(&self, q: &[f64], p: &[f64]) -> Complex64 {
        let mut v = self.offset;
        for (c, x) in self.q.iter().zip(q) {
            v += c * x;
        }
        for (c, x) in self.p.iter().zip(p) {
            v += c * x;
        }
        v
    }

    fn n(&self) -> usize {
        self.q.len().max(self.p.len())
    }
}

/// Phase-space observable `f(q, p)`.
#[derive(Clone)]
pub enum ClassicalExpr {
    Var(Coord, usize),
    Const(Complex64),
    Sum(Vec<ClassicalExpr>),
    Product(Vec<ClassicalExpr>),
    Pow(Box<ClassicalExpr>, u32),
    Exp(LinearForm),
    Opaque { name: String, arg: Box<ClassicalExpr>, func: OpaqueFn, growth: GrowthBound },
}

impl fmt::Debug for ClassicalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClassicalExpr({self})")
    }
}

fn fmt_c(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else if c.re == 0.0 {
        format!("{}i", c.im)
    } else {
        format!("({}+{}i)", c.re, c.im)
    }
}

fn var_name(c: Coord, k: usize) -> String {
    let base = match c {
        Coord::Q => "q",
        Coord::P => "p",
    };
    if k == 0 {
        base.to_string()
    } else {
        format!("{base}{}", k + 1)
    }
}

impl fmt::Display for ClassicalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassicalExpr::Var(c, k) => write!(f, "{}", var_name(*c, *k)),
            ClassicalExpr::Const(c) => write!(f, "{}", fmt_c(*c)),
            ClassicalExpr::Sum(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join(" + "))
            }
            ClassicalExpr::Product(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join("*"))
            }
            ClassicalExpr::Pow(b, k) => write!(f, "({b})^{k}"),
            ClassicalExpr::Exp(l) => {
                let mut parts = vec![fmt_c(l.offset)];
                for (k, c) in l.q.iter().enumerate() {
                    parts.push(format!("{}*{}", fmt_c(*c), var_name(Coord::Q, k)));
                }
                for (k, c) in l.p.iter().enumerate() {
                    parts.push(format!("{}*{}", fmt_c(*c), var_name(Coord::P, k)));
                }
                write!(f, "exp({})", parts.join(" + "))
            }
            ClassicalExpr::Opaque { name, arg, .. } => write!(f, "{name}({arg})"),
        }
    }
}

impl ClassicalExpr {
    pub fn q() -> Self {
        ClassicalExpr::Var(Coord::Q, 0)
    }

    pub fn p() -> Self {
        ClassicalExpr::Var(Coord::P, 0)
    }

    pub fn constant(c: impl Into<Complex64>) -> Self {
        ClassicalExpr::Const(c.into())
    }

    /// Opaque function node; rejects super-exponential growth.
    pub fn opaque(
        name: &str,
        arg: ClassicalExpr,
        func: OpaqueFn,
        growth: GrowthBound,
    ) -> Result<Self, ObservableError> {
        if growth == GrowthBound::Super {
            return Err(ObservableError::GrowthRejected(name.to_string()));
        }
        Ok(ClassicalExpr::Opaque { name: name.to_string(), arg: Box::new(arg), func, growth })
    }

    pub fn add(self, o: ClassicalExpr) -> Self {
        ClassicalExpr::Sum(vec![self, o])
    }

    pub fn mul(self, o: ClassicalExpr) -> Self {
        ClassicalExpr::Product(vec![self, o])
    }

    pub fn pow(self, k: u32) -> Self {
        ClassicalExpr::Pow(Box::new(self), k)
    }

    /// No opaque node anywhere in the tree.
    pub fn is_in_class(&self) -> bool {
        match self {
            ClassicalExpr::Var(..) | ClassicalExpr::Const(_) | ClassicalExpr::Exp(_) => true,
            ClassicalExpr::Sum(xs) | ClassicalExpr::Product(xs) => xs.iter().all(|x| x.is_in_class()),
            ClassicalExpr::Pow(b, _) => b.is_in_class(),
            ClassicalExpr::Opaque { .. } => false,
        }
    }

    /// Number of degrees of freedom referenced (at least 1).
    pub fn dof(&self) -> usize {
        match self {
            ClassicalExpr::Var(_, k) => k + 1,
            ClassicalExpr::Const(_) => 1,
            ClassicalExpr::Exp(l) => l.n().max(1),
            ClassicalExpr::Sum(xs) | ClassicalExpr::Product(xs) => xs.iter().map(|x| x.dof()).max().unwrap_or(1),
            ClassicalExpr::Pow(b, _) => b.dof(),
            ClassicalExpr::Opaque { arg, .. } => arg.dof(),
        }
    }

    pub fn eval(&self, q: &[f64], p: &[f64]) -> Complex64 {
        match self {
            ClassicalExpr::Var(Coord::Q, k) => Complex64::new(q[*k], 0.0),
            ClassicalExpr::Var(Coord::P, k) => Complex64::new(p[*k], 0.0),
            ClassicalExpr::Const(c) => *c,
            ClassicalExpr::Sum(xs) => xs.iter().map(|x| x.eval(q, p)).sum(),
            ClassicalExpr::Product(xs) => xs.iter().map(|x| x.eval(q, p)).product(),
            ClassicalExpr::Pow(b, k) => b.eval(q, p).powu(*k),
            ClassicalExpr::Exp(l) => l.eval(q, p).exp(),
            ClassicalExpr::Opaque { arg, func, .. } => func(arg.eval(q, p)),
        }
    }

    /// Closed form over `[q_1..q_n, p_1..p_n]`; fails on opaque nodes.
    pub fn to_gaussian(&self, n: usize) -> Result<GaussianSum, ObservableError> {
        let d = 2 * n;
        let poly = |p: Poly| GaussianSum::from_block(Exponent::zero(d), p);
        Ok(match self {
            ClassicalExpr::Var(Coord::Q, k) => poly(Poly::variable(d, *k)),
            ClassicalExpr::Var(Coord::P, k) => poly(Poly::variable(d, n + *k)),
            ClassicalExpr::Const(c) => GaussianSum::constant(d, *c),
            ClassicalExpr::Sum(xs) => {
                let mut acc = GaussianSum::zero(d);
                for x in xs {
                    acc = acc.add(&x.to_gaussian(n)?)?;
                }
                acc
            }
            ClassicalExpr::Product(xs) => {
                let mut acc = GaussianSum::constant(d, Complex64::new(1.0, 0.0));
                for x in xs {
                    acc = acc.multiply(&x.to_gaussian(n)?)?;
                }
                acc
            }
            ClassicalExpr::Pow(b, k) => {
                let base = b.to_gaussian(n)?;
                let mut acc = GaussianSum::constant(d, Complex64::new(1.0, 0.0));
                for _ in 0..*k {
                    acc = acc.multiply(&base)?;
                }
                acc
            }
            ClassicalExpr::Exp(l) => {
                let mut lin = vec![Complex64::new(0.0, 0.0); d];
                for (k, c) in l.q.iter().enumerate() {
                    lin[k] = *c;
                }
                for (k, c) in l.p.iter().enumerate() {
                    lin[n + k] = *c;
                }
                GaussianSum::from_exponent(Exponent::new(d, vec![Complex64::new(0.0, 0.0); d * d], lin, l.offset))
            }
            ClassicalExpr::Opaque { name, .. } => return Err(ObservableError::NotInClass(name.clone())),
        })
    }

    /// Affine form if the expression is at most linear and free of exponentials.
    pub(crate) fn as_linear(&self, n: usize) -> Option<LinearForm> {
        let g = self.to_gaussian(n).ok()?;
        let mut form = LinearForm {
            q: vec![Complex64::new(0.0, 0.0); n],
            p: vec![Complex64::new(0.0, 0.0); n],
            offset: Complex64::new(0.0, 0.0),
        };
        for t in g.terms() {
            let e = t.exponent;
            if e.lin().iter().any(|v| v.norm() != 0.0) || e.quad_matrix().iter().any(|v| v.norm() != 0.0) {
                return None;
            }
            let c = t.coeff * e.constant().exp();
            let deg: u32 = t.monomial.iter().sum();
            match deg {
                0 => form.offset += c,
                1 => {
                    let k = t.monomial.iter().position(|&m| m == 1)?;
                    if k < n {
                        form.q[k] += c;
                    } else {
                        form.p[k - n] += c;
                    }
                }
                _ => return None,
            }
        }
        Some(form)
    }
}

/// Named opaque callbacks available to the expression grammar.
#[derive(Clone)]
pub struct FunctionRegistry {
    funcs: HashMap<String, (OpaqueFn, GrowthBound)>,
}

impl Default for FunctionRegistry {
    fn default() -> Self {
        let mut r = Self { funcs: HashMap::new() };
        r.funcs.insert(
            "ln_abs".into(),
            (Arc::new(|z: Complex64| Complex64::new(z.norm().ln(), 0.0)), GrowthBound::Polynomial),
        );
        r.funcs.insert("sin".into(), (Arc::new(|z: Complex64| z.sin()), GrowthBound::Exponential));
        r.funcs.insert("cos".into(), (Arc::new(|z: Complex64| z.cos()), GrowthBound::Exponential));
        r
    }
}

impl FunctionRegistry {
    pub fn register(&mut self, name: &str, func: OpaqueFn, growth: GrowthBound) -> Result<(), ObservableError> {
        if growth == GrowthBound::Super {
            return Err(ObservableError::GrowthRejected(name.to_string()));
        }
        self.funcs.insert(name.to_string(), (func, growth));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&(OpaqueFn, GrowthBound)> {
        self.funcs.get(name)
    }
}
