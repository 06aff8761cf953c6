use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::gaussian::{AffineMap, Exponent, ExponentBuilder, GaussianBlock, GaussianSum, Poly};
use crate::observables::{expr, smear_kernel};
use crate::states::PhasePoint;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Which coherent family the kernel lives in; fixes the Gram used for unitarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameTag {
    Vector,
    Kernel,
}

/// Kernel sampled on a product grid in `(q', p')`, one row per sample `(q, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridKernel {
    /// `2n` axes, first axis slowest.
    pub axes: Vec<Vec<f64>>,
    pub cell_weight: f64,
    pub samples: Vec<PhasePoint>,
    #[serde(with = "crate::json::complex_rows")]
    pub rows: Vec<Vec<Complex64>>,
    /// Optional linear generator: `row(z) = sum_i basis_i * S_{targets_i}(z)`.
    #[serde(default, with = "crate::json::complex_rows")]
    pub basis: Vec<Vec<Complex64>>,
    #[serde(default)]
    pub targets: Vec<String>,
}

impl GridKernel {
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let total: usize = self.axes.iter().map(|a| a.len()).product();
        (0..total)
            .map(|mut idx| {
                let mut out = vec![0.0; self.axes.len()];
                for (k, axis) in self.axes.iter().enumerate().rev() {
                    out[k] = axis[idx % axis.len()];
                    idx /= axis.len();
                }
                out
            })
            .collect()
    }

    fn sample_index(&self, z: &PhasePoint) -> Option<usize> {
        self.samples.iter().position(|s| s.dist2(z) < 1e-24)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelForm {
    /// Gaussian sum over `[q, p, q', p']`.
    Closed(GaussianSum),
    Grid(GridKernel),
    /// Gaussian sum over `[q', p']` for each listed `(q, p)`.
    Rows(Vec<(PhasePoint, GaussianSum)>),
}

/// Coefficient kernel `m(q, p, q', p')`.
#[derive(Debug, Clone, PartialEq)]
pub struct MKernel {
    pub h: f64,
    pub n: usize,
    pub form: KernelForm,
    pub frame: FrameTag,
    pub label: String,
}

/// `m(z, .)` for a fixed first argument.
#[derive(Debug, Clone)]
pub enum Row {
    Gaussian(GaussianSum),
    Discrete { nodes: Arc<Vec<Vec<f64>>>, weight: f64, values: Vec<Complex64> },
}

impl Row {
    pub fn eval(&self, w: &[f64]) -> Option<Complex64> {
        match self {
            Row::Gaussian(g) => Some(g.evaluate(w)),
            Row::Discrete { nodes, values, .. } => {
                nodes.iter().position(|nd| nd.iter().zip(w).all(|(a, b)| (a - b).abs() < 1e-12)).map(|j| values[j])
            }
        }
    }
}

fn overlap_exponent(h: f64, n: usize) -> Exponent {
    let mut b = ExponentBuilder::new(4 * n);
    let c = -PI / (2.0 * h);
    for k in 0..n {
        b = b
            .square(&[(k, 1.0), (2 * n + k, -1.0)], 0.0, c)
            .square(&[(n + k, 1.0), (3 * n + k, -1.0)], 0.0, c)
            .product(k, 3 * n + k, -I * (PI / h))
            .product(2 * n + k, n + k, I * (PI / h));
    }
    b.build()
}

/// `<v_a, v_b>` as a Gaussian over `[a, b]`.
pub fn overlap_sum(h: f64, n: usize) -> GaussianSum {
    GaussianSum::from_exponent(overlap_exponent(h, n))
}

/// `h^{-n} exp(-(pi/h)|a - b|^2)` over `[a, b]`.
pub fn transport_sum(h: f64, n: usize) -> GaussianSum {
    let mut b = ExponentBuilder::new(4 * n);
    for k in 0..2 * n {
        b = b.square(&[(k, 1.0), (2 * n + k, -1.0)], 0.0, -PI / h);
    }
    GaussianSum::from_block(b.build(), Poly::constant(4 * n, Complex64::new(h.powi(-(n as i32)), 0.0)))
}

/// `g(A z + s, w)` for `g` over `[a, b]`; `a` is `2n x 2n` row-major.
pub fn pull_back_first(g: &GaussianSum, n: usize, a: &[f64], s: &[f64]) -> Result<GaussianSum, TransformError> {
    let d = 4 * n;
    let mut mat = vec![0.0; d * d];
    for i in 0..2 * n {
        for j in 0..2 * n {
            mat[i * d + j] = a[i * 2 * n + j];
        }
        mat[(2 * n + i) * d + 2 * n + i] = 1.0;
    }
    let mut shift = vec![0.0; d];
    shift[..2 * n].copy_from_slice(s);
    Ok(g.substitute_affine(&AffineMap::new(d, d, mat, shift))?)
}

fn fix_block(n: usize, fixed: &[f64], first: bool) -> AffineMap {
    let d = 4 * n;
    let k = 2 * n;
    let mut mat = vec![0.0; d * k];
    let mut shift = vec![0.0; d];
    let (free_off, fixed_off) = if first { (k, 0) } else { (0, k) };
    for i in 0..k {
        mat[(free_off + i) * k + i] = 1.0;
        shift[fixed_off + i] = fixed[i];
    }
    AffineMap::new(d, k, mat, shift)
}

impl MKernel {
    /// Closed kernel; requires integrability in `(q', p')`.
    pub fn closed(h: f64, n: usize, sum: GaussianSum, frame: FrameTag, label: &str) -> Result<Self, TransformError> {
        if sum.dim() != 4 * n {
            return Err(TransformError::Kernel(format!("closed kernel needs {} variables, got {}", 4 * n, sum.dim())));
        }
        let w: Vec<usize> = (2 * n..4 * n).collect();
        sum.check_integrable(&w).map_err(|_| TransformError::NotIntegrable(label.to_string()))?;
        Ok(Self { h, n, form: KernelForm::Closed(sum), frame, label: label.to_string() })
    }

    pub fn grid(h: f64, n: usize, grid: GridKernel, frame: FrameTag, label: &str) -> Result<Self, TransformError> {
        let size: usize = grid.axes.iter().map(|a| a.len()).product();
        if grid.axes.len() != 2 * n
            || grid.rows.len() != grid.samples.len()
            || grid.rows.iter().any(|r| r.len() != size)
        {
            return Err(TransformError::Kernel("grid kernel layout mismatch".into()));
        }
        if grid.rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TransformError::Kernel("grid kernel has non-finite values".into()));
        }
        Ok(Self { h, n, form: KernelForm::Grid(grid), frame, label: label.to_string() })
    }

    pub fn rows(
        h: f64,
        n: usize,
        rows: Vec<(PhasePoint, GaussianSum)>,
        frame: FrameTag,
        label: &str,
    ) -> Result<Self, TransformError> {
        let w: Vec<usize> = (0..2 * n).collect();
        for (_, r) in &rows {
            if r.dim() != 2 * n {
                return Err(TransformError::Kernel("row dimension mismatch".into()));
            }
            r.check_integrable(&w).map_err(|_| TransformError::NotIntegrable(label.to_string()))?;
        }
        Ok(Self { h, n, form: KernelForm::Rows(rows), frame, label: label.to_string() })
    }

    /// `m = 0` in closed form.
    pub fn zero(h: f64, n: usize, frame: FrameTag) -> Self {
        Self { h, n, form: KernelForm::Closed(GaussianSum::zero(4 * n)), frame, label: "zero".into() }
    }

    pub fn closed_sum(&self) -> Option<&GaussianSum> {
        match &self.form {
            KernelForm::Closed(s) => Some(s),
            _ => None,
        }
    }

    pub fn relabel(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    /// `m(z, .)`.
    pub fn row(&self, z: &PhasePoint) -> Result<Row, TransformError> {
        match &self.form {
            KernelForm::Closed(s) => Ok(Row::Gaussian(s.substitute_affine(&fix_block(self.n, &z.coords(), true))?)),
            KernelForm::Rows(rows) => rows
                .iter()
                .find(|(s, _)| s.dist2(z) < 1e-24)
                .map(|(_, r)| Row::Gaussian(r.clone()))
                .ok_or_else(|| TransformError::Kernel(format!("no row stored at {z:?}"))),
            KernelForm::Grid(g) => {
                let nodes = Arc::new(g.nodes());
                let values = if let Some(i) = g.sample_index(z) {
                    g.rows[i].clone()
                } else if !g.basis.is_empty() {
                    let mut v = vec![Complex64::new(0.0, 0.0); nodes.len()];
                    for (col, src) in g.basis.iter().zip(&g.targets) {
                        let b = smear_kernel(&expr(src)?, self.h, z)?;
                        for (a, c) in v.iter_mut().zip(col) {
                            *a += c * b;
                        }
                    }
                    v
                } else {
                    return Err(TransformError::Kernel(format!("no row stored at {z:?}")));
                };
                Ok(Row::Discrete { nodes, weight: g.cell_weight, values })
            }
        }
    }

    /// `m(., z')` as a Gaussian in the first argument; closed kernels only.
    pub fn column(&self, zp: &PhasePoint) -> Result<GaussianSum, TransformError> {
        match &self.form {
            KernelForm::Closed(s) => Ok(s.substitute_affine(&fix_block(self.n, &zp.coords(), false))?),
            _ => Err(TransformError::Unsupported("columns of non-closed kernels".into())),
        }
    }

    pub fn eval(&self, z: &PhasePoint, w: &PhasePoint) -> Result<Complex64, TransformError> {
        if let KernelForm::Closed(s) = &self.form {
            let pt: Vec<f64> = z.coords().into_iter().chain(w.coords()).collect();
            return Ok(s.evaluate(&pt));
        }
        self.row(z)?.eval(&w.coords()).ok_or_else(|| TransformError::Kernel(format!("{w:?} is not a grid node")))
    }

    pub fn scale(&self, c: Complex64) -> MKernel {
        let form = match &self.form {
            KernelForm::Closed(s) => KernelForm::Closed(s.scale(c)),
            KernelForm::Rows(r) => KernelForm::Rows(r.iter().map(|(z, g)| (z.clone(), g.scale(c))).collect()),
            KernelForm::Grid(g) => {
                let mut g = g.clone();
                g.rows.iter_mut().flatten().for_each(|v| *v *= c);
                g.basis.iter_mut().flatten().for_each(|v| *v *= c);
                KernelForm::Grid(g)
            }
        };
        MKernel { form, label: format!("{c}*{}", self.label), ..self.clone() }
    }

    /// Sum of two kernels of the same form.
    pub fn add(&self, other: &MKernel) -> Result<MKernel, TransformError> {
        if self.n != other.n || self.h != other.h {
            return Err(TransformError::Kernel("kernels differ in h or n".into()));
        }
        let form = match (&self.form, &other.form) {
            (KernelForm::Closed(a), KernelForm::Closed(b)) => KernelForm::Closed(a.add(b)?),
            (KernelForm::Grid(a), KernelForm::Grid(b)) if a.axes == b.axes && a.samples == b.samples => {
                let mut g = a.clone();
                for (ra, rb) in g.rows.iter_mut().zip(&b.rows) {
                    ra.iter_mut().zip(rb).for_each(|(x, y)| *x += y);
                }
                g.basis.clear();
                g.targets.clear();
                KernelForm::Grid(g)
            }
            _ => return Err(TransformError::Unsupported("adding kernels of different forms".into())),
        };
        Ok(MKernel { form, label: format!("{}+{}", self.label, other.label), ..self.clone() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&KernelJson::from(self)).expect("kernel serializes")
    }

    pub fn from_json(src: &str) -> Result<Self, TransformError> {
        Self::try_from(serde_json::from_str::<KernelJson>(src)?)
    }
}

impl Serialize for MKernel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        KernelJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MKernel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = KernelJson::deserialize(d)?;
        MKernel::try_from(j).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<KernelJson> for MKernel {
    type Error = TransformError;

    fn try_from(j: KernelJson) -> Result<Self, TransformError> {
        let n = j.n;
        match j.form {
            FormJson::Closed { blocks } => Self::closed(j.h, n, sum_from_json(4 * n, &blocks)?, j.frame, &j.label),
            FormJson::Grid(g) => Self::grid(j.h, n, g, j.frame, &j.label),
            FormJson::Rows { rows } => {
                let rows = rows
                    .into_iter()
                    .map(|r| Ok((r.z, sum_from_json(2 * n, &r.blocks)?)))
                    .collect::<Result<Vec<_>, TransformError>>()?;
                Self::rows(j.h, n, rows, j.frame, &j.label)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TermJson {
    monomial: Vec<u32>,
    #[serde(with = "crate::json::complex")]
    coeff: Complex64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockJson {
    /// Symmetric, row-major.
    #[serde(with = "crate::json::complex_vec")]
    matrix: Vec<Complex64>,
    #[serde(with = "crate::json::complex_vec")]
    linear: Vec<Complex64>,
    #[serde(with = "crate::json::complex")]
    constant: Complex64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prefactor: Option<Vec<TermJson>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RowJson {
    z: PhasePoint,
    blocks: Vec<BlockJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum FormJson {
    Closed { blocks: Vec<BlockJson> },
    Grid(GridKernel),
    Rows { rows: Vec<RowJson> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KernelJson {
    h: f64,
    n: usize,
    frame: FrameTag,
    label: String,
    form: FormJson,
}

fn sum_to_json(s: &GaussianSum) -> Vec<BlockJson> {
    s.blocks()
        .iter()
        .map(|b| {
            let terms: Vec<TermJson> =
                b.poly.terms().map(|(m, c)| TermJson { monomial: m.clone(), coeff: *c }).collect();
            let trivial = terms.len() == 1
                && terms[0].monomial.iter().all(|&e| e == 0)
                && terms[0].coeff == Complex64::new(1.0, 0.0);
            BlockJson {
                matrix: b.exponent.quad_matrix().to_vec(),
                linear: b.exponent.lin().to_vec(),
                constant: b.exponent.constant(),
                prefactor: if trivial { None } else { Some(terms) },
            }
        })
        .collect()
}

fn sum_from_json(dim: usize, blocks: &[BlockJson]) -> Result<GaussianSum, TransformError> {
    let mut out = GaussianSum::zero(dim);
    for b in blocks {
        if b.matrix.len() != dim * dim || b.linear.len() != dim {
            return Err(TransformError::Kernel(format!("closed block must have a {dim}x{dim} matrix")));
        }
        let poly = match &b.prefactor {
            None => Poly::constant(dim, Complex64::new(1.0, 0.0)),
            Some(terms) => {
                let mut p = Poly::zero(dim);
                for t in terms {
                    if t.monomial.len() != dim {
                        return Err(TransformError::Kernel("prefactor monomial has wrong arity".into()));
                    }
                    p.add_term(t.monomial.clone(), t.coeff);
                }
                p
            }
        };
        out.push(GaussianBlock { exponent: Exponent::new(dim, b.matrix.clone(), b.linear.clone(), b.constant), poly });
    }
    Ok(out)
}

impl From<&MKernel> for KernelJson {
    fn from(m: &MKernel) -> Self {
        let form = match &m.form {
            KernelForm::Closed(s) => FormJson::Closed { blocks: sum_to_json(s) },
            KernelForm::Grid(g) => FormJson::Grid(g.clone()),
            KernelForm::Rows(rows) => FormJson::Rows {
                rows: rows.iter().map(|(z, s)| RowJson { z: z.clone(), blocks: sum_to_json(s) }).collect(),
            },
        };
        KernelJson { h: m.h, n: m.n, frame: m.frame, label: m.label.clone(), form }
    }
}
