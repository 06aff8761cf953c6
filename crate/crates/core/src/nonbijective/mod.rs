//! Split operators for transformations that identify `z` with `-z`: parity of
//! kernels, the half-plane pair map, its injectivity, and the classical branch map.
//!
//! Images of coherent combinations are represented by their coefficient
//! function `w -> sum_k c_k m(z_k, w)` on a fixed set of evaluation nodes.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::observables::ClassicalExpr;
use crate::states::PhasePoint;
use crate::transforms::{KernelForm, MKernel, Row, SampleSet, TransformError};

/// Default distance from the singular line below which branches are refused.
pub const SINGULAR_MIN: f64 = 0.1;
/// Relative sup-difference below which two images count as equal.
pub const IMAGE_TOL: f64 = 1e-6;
const LABEL_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum NonbijectiveError {
    #[error("unlabeled input: {0}")]
    Unlabeled(String),
    #[error("({q}, {p}) lies within {min} of the singular line q + p = 0")]
    SingularLine { q: f64, p: f64, min: f64 },
    #[error("h mismatch: kernel has {kernel}, combination has {combination}")]
    PlanckMismatch { kernel: f64, combination: f64 },
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Side of the line `sum_k (q_k + p_k) = 0` that receives labels exactly on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    Plus,
    Minus,
}

fn side(z: &PhasePoint) -> f64 {
    z.q.iter().chain(&z.p).sum()
}

fn is_plus(z: &PhasePoint, tie: TieBreak) -> bool {
    let s = side(z);
    s > 0.0 || (s == 0.0 && tie == TieBreak::Plus)
}

/// `sum_k c_k l_(h, z_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherentCombination {
    pub h: f64,
    pub terms: Vec<LabeledTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTerm {
    #[serde(with = "crate::json::complex")]
    pub coeff: Complex64,
    pub label: PhasePoint,
}

impl CoherentCombination {
    pub fn new(h: f64, terms: Vec<(Complex64, PhasePoint)>) -> Result<Self, NonbijectiveError> {
        if terms.is_empty() {
            return Err(NonbijectiveError::Unlabeled("a combination needs at least one labeled term".into()));
        }
        let n = terms[0].1.n();
        if terms.iter().any(|(_, z)| z.n() != n) {
            return Err(NonbijectiveError::Unlabeled("labels disagree in dimension".into()));
        }
        Ok(Self { h, terms: terms.into_iter().map(|(coeff, label)| LabeledTerm { coeff, label }).collect() })
    }

    pub fn single(h: f64, q: f64, p: f64) -> Self {
        Self { h, terms: vec![LabeledTerm { coeff: Complex64::new(1.0, 0.0), label: PhasePoint::one(q, p) }] }
    }

    pub fn plus(&self, other: &CoherentCombination) -> Self {
        Self { h: self.h, terms: self.terms.iter().chain(&other.terms).cloned().collect() }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let terms = self.terms.iter().map(|t| LabeledTerm { coeff: t.coeff * c, label: t.label.clone() }).collect();
        Self { h: self.h, terms }
    }

    /// Merged labels with nonzero coefficients, sorted; `fold` maps `-z` onto `z` first.
    fn canonical(&self, fold: bool, tie: TieBreak) -> Vec<(PhasePoint, Complex64)> {
        let mut out: Vec<(PhasePoint, Complex64)> = Vec::new();
        for t in &self.terms {
            let z = if fold && !is_plus(&t.label, tie) { t.label.neg() } else { t.label.clone() };
            match out.iter_mut().find(|(y, _)| y.dist2(&z) <= LABEL_TOL * LABEL_TOL) {
                Some((_, c)) => *c += t.coeff,
                None => out.push((z, t.coeff)),
            }
        }
        out.retain(|(_, c)| c.norm() > LABEL_TOL);
        out.sort_by(|a, b| a.0.coords().partial_cmp(&b.0.coords()).expect("finite labels"));
        out
    }

    fn same_as(a: &[(PhasePoint, Complex64)], b: &[(PhasePoint, Complex64)]) -> bool {
        a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|((za, ca), (zb, cb))| za.dist2(zb) <= LABEL_TOL * LABEL_TOL && (ca - cb).norm() <= LABEL_TOL)
    }
}

/// Coefficient function of an image on `nodes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelImage {
    pub h: f64,
    pub nodes: Arc<Vec<Vec<f64>>>,
    #[serde(with = "crate::json::complex_vec")]
    pub values: Vec<Complex64>,
}

impl KernelImage {
    fn zero(h: f64, nodes: Arc<Vec<Vec<f64>>>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); nodes.len()];
        Self { h, nodes, values }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == Complex64::new(0.0, 0.0))
    }

    pub fn sup_diff(&self, other: &KernelImage) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `sup |a - b| / max(sup |a|, sup |b|)`; zero when both vanish.
    pub fn rel_diff(&self, other: &KernelImage) -> f64 {
        relative(self.sup_diff(other), self.sup_norm().max(other.sup_norm()))
    }

    pub fn add(&self, other: &KernelImage) -> KernelImage {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        KernelImage { values, ..self.clone() }
    }
}

/// The pair of half-plane images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPair {
    pub plus: KernelImage,
    pub minus: KernelImage,
}

impl KernelPair {
    pub fn sup_diff(&self, other: &KernelPair) -> f64 {
        self.plus.sup_diff(&other.plus).max(self.minus.sup_diff(&other.minus))
    }

    pub fn sup_norm(&self) -> f64 {
        self.plus.sup_norm().max(self.minus.sup_norm())
    }

    /// Componentwise sup-difference relative to the largest component of either pair.
    pub fn rel_diff(&self, other: &KernelPair) -> f64 {
        relative(self.sup_diff(other), self.sup_norm().max(other.sup_norm()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pair serializes")
    }
}

fn relative(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// `33 x 33` nodes over `[-4, 4]^2` for kernels without their own grid.
pub fn default_nodes(n: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..33).map(|i| -4.0 + 0.25 * i as f64).collect();
    let mut out = vec![vec![]];
    for _ in 0..2 * n {
        out = out.into_iter().flat_map(|pre| axis.iter().map(move |a| [pre.clone(), vec![*a]].concat())).collect();
    }
    out
}

/// Evaluation nodes of `m`: its grid when it has one.
pub fn kernel_nodes(m: &MKernel) -> Arc<Vec<Vec<f64>>> {
    match &m.form {
        KernelForm::Grid(g) => Arc::new(g.nodes()),
        _ => Arc::new(default_nodes(m.n)),
    }
}

/// `m(z, .)` on `nodes`.
fn row_on(m: &MKernel, z: &PhasePoint, nodes: &[Vec<f64>]) -> Result<Vec<Complex64>, TransformError> {
    match m.row(z)? {
        Row::Discrete { values, .. } => Ok(values),
        Row::Gaussian(g) => Ok(nodes.iter().map(|w| g.evaluate(w)).collect()),
    }
}

/// `max_{z, w} |m(z, w) - m(-z, w)|` over the samples and the kernel's evaluation nodes.
pub fn parity_residual(m: &MKernel, samples: &SampleSet) -> Result<f64, NonbijectiveError> {
    let nodes = kernel_nodes(m);
    let worst = samples
        .points
        .par_iter()
        .map(|z| {
            let a = row_on(m, z, &nodes)?;
            let b = row_on(m, &z.neg(), &nodes)?;
            Ok(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>, TransformError>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

fn check_h(m: &MKernel, l: &CoherentCombination) -> Result<(), NonbijectiveError> {
    if m.h != l.h {
        return Err(NonbijectiveError::PlanckMismatch { kernel: m.h, combination: l.h });
    }
    if l.terms.is_empty() {
        return Err(NonbijectiveError::Unlabeled("empty combination".into()));
    }
    Ok(())
}

fn accumulate(
    m: &MKernel,
    terms: &[&LabeledTerm],
    nodes: &Arc<Vec<Vec<f64>>>,
) -> Result<KernelImage, NonbijectiveError> {
    let mut img = KernelImage::zero(m.h, nodes.clone());
    for t in terms {
        for (v, r) in img.values.iter_mut().zip(row_on(m, &t.label, nodes)?) {
            *v += t.coeff * r;
        }
    }
    Ok(img)
}

/// The unsplit image `sum_k c_k m(z_k, .)`.
pub fn apply(m: &MKernel, l: &CoherentCombination) -> Result<KernelImage, NonbijectiveError> {
    check_h(m, l)?;
    accumulate(m, &l.terms.iter().collect::<Vec<_>>(), &kernel_nodes(m))
}

/// Routes each labeled term by the sign of `q + p`; the line goes to `tie`.
pub fn split_apply(m: &MKernel, l: &CoherentCombination, tie: TieBreak) -> Result<KernelPair, NonbijectiveError> {
    check_h(m, l)?;
    let nodes = kernel_nodes(m);
    let (plus, minus): (Vec<&LabeledTerm>, Vec<&LabeledTerm>) = l.terms.iter().partition(|t| is_plus(&t.label, tie));
    Ok(KernelPair { plus: accumulate(m, &plus, &nodes)?, minus: accumulate(m, &minus, &nodes)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityVerdict {
    /// Relative to the larger of the two images.
    pub unsplit_diff: f64,
    pub split_diff: f64,
    pub unsplit_equal: bool,
    pub split_equal: bool,
    /// `l1 = l2` as labeled combinations.
    pub labels_equal: bool,
    /// Equal after identifying `z` with `-z`.
    pub equivalent: bool,
    pub tol: f64,
}

impl InjectivityVerdict {
    /// Unsplit equality matches equivalence and split equality matches label equality.
    pub fn consistent(&self) -> bool {
        self.unsplit_equal == self.equivalent && self.split_equal == self.labels_equal
    }
}

pub fn injectivity_check(
    m: &MKernel,
    l1: &CoherentCombination,
    l2: &CoherentCombination,
    tol: f64,
    tie: TieBreak,
) -> Result<InjectivityVerdict, NonbijectiveError> {
    let unsplit_diff = apply(m, l1)?.rel_diff(&apply(m, l2)?);
    let split_diff = split_apply(m, l1, tie)?.rel_diff(&split_apply(m, l2, tie)?);
    Ok(InjectivityVerdict {
        unsplit_diff,
        split_diff,
        unsplit_equal: unsplit_diff <= tol,
        split_equal: split_diff <= tol,
        labels_equal: CoherentCombination::same_as(&l1.canonical(false, tie), &l2.canonical(false, tie)),
        equivalent: CoherentCombination::same_as(&l1.canonical(true, tie), &l2.canonical(true, tie)),
        tol,
    })
}

/// Ratio of the collapse `sup |U* l_z - U* l_{-z}|` to the parity residual, maximized over samples.
pub fn collapse_constant(m: &MKernel, samples: &SampleSet) -> Result<(f64, f64), NonbijectiveError> {
    let eps = parity_residual(m, samples)?;
    let mut worst: f64 = 0.0;
    for z in &samples.points {
        let a = apply(m, &CoherentCombination::single(m.h, z.q[0], z.p[0]))?;
        let b = apply(m, &CoherentCombination::single(m.h, -z.q[0], -z.p[0]))?;
        worst = worst.max(a.sup_diff(&b));
    }
    let c = if eps > 0.0 {
        worst / eps
    } else if worst == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok((eps, c))
}

/// Seeded distinct combinations of 1 to 3 terms with labels off the singular line.
pub fn random_corpus(h: f64, count: usize, seed: u64) -> Vec<CoherentCombination> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = rng.random_range(1..4usize);
            let terms = (0..k)
                .map(|_| {
                    let z = loop {
                        let z = PhasePoint::one(rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5));
                        if side(&z).abs() >= SINGULAR_MIN {
                            break z;
                        }
                    };
                    let c = Complex64::new(rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5));
                    LabeledTerm { coeff: c, label: z }
                })
                .collect();
            CoherentCombination { h, terms }
        })
        .collect()
}

/// A classical value split by half plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchValue {
    #[serde(with = "crate::json::complex")]
    pub plus: Complex64,
    #[serde(with = "crate::json::complex")]
    pub minus: Complex64,
    /// `f~(q, p)` before splitting.
    #[serde(with = "crate::json::complex")]
    pub unsplit: Complex64,
}

/// The repulsive-oscillator map `(q, p) -> (ln|q + p|, (p^2 - q^2)/2)`.
pub fn repulsive_map(z: &PhasePoint) -> PhasePoint {
    let (q, p) = (z.q[0], z.p[0]);
    PhasePoint::one((q + p).abs().ln(), 0.5 * (p * p - q * q))
}

/// `[f~(z), 0]` when `q + p > 0`, `[0, f~(z)]` when `q + p < 0`, with `f~ = f o map`.
pub fn classical_branch(
    f: &ClassicalExpr,
    map: &dyn Fn(&PhasePoint) -> PhasePoint,
    z: &PhasePoint,
    min: f64,
) -> Result<BranchValue, NonbijectiveError> {
    let s = side(z);
    if s.abs() < min {
        return Err(NonbijectiveError::SingularLine { q: z.q[0], p: z.p[0], min });
    }
    let img = map(z);
    let v = f.eval(&img.q, &img.p);
    let zero = Complex64::new(0.0, 0.0);
    Ok(if s > 0.0 {
        BranchValue { plus: v, minus: zero, unsplit: v }
    } else {
        BranchValue { plus: zero, minus: v, unsplit: v }
    })
}

#[cfg(test)]
mod tests;
