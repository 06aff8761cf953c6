use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use super::kernel::{overlap_sum, pull_back_first, transport_sum, FrameTag, MKernel};
use super::spec::{ClassicalMap, Relation, SpecParams, TransformationSpec};
use super::TransformError;
use crate::gaussian::{ExponentBuilder, GaussianSum, Poly};
use crate::observables::{ForcingProfile, FunctionRegistry};
use crate::states::{frame_constant, PhasePoint};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A built-in transformation with its candidate kernels.
#[derive(Debug, Clone)]
pub struct Builtin {
    pub spec: TransformationSpec,
    pub candidates: Vec<MKernel>,
}

fn relations(pairs: &[(&str, &str)]) -> Result<Vec<Relation>, TransformError> {
    let reg = FunctionRegistry::default();
    pairs.iter().map(|(l, r)| Relation::parse(l, r, &reg)).collect()
}

fn affine_map(a: [f64; 4], s: [f64; 2]) -> ClassicalMap {
    Arc::new(move |z: &PhasePoint| {
        PhasePoint::one(a[0] * z.q[0] + a[1] * z.p[0] + s[0], a[2] * z.q[0] + a[3] * z.p[0] + s[1])
    })
}

/// Transport kernel `h^{-1} exp(-(pi/h)|A z + s - w|^2)`.
pub fn transport_kernel(h: f64, a: [f64; 4], s: [f64; 2], label: &str) -> Result<MKernel, TransformError> {
    MKernel::closed(h, 1, pull_back_first(&transport_sum(h, 1), 1, &a, &s)?, FrameTag::Kernel, label)
}

/// Rotated coherent kernel `<v_(A z + s), v_w>`.
pub fn overlap_kernel(h: f64, a: [f64; 4], s: [f64; 2], label: &str) -> Result<MKernel, TransformError> {
    MKernel::closed(h, 1, pull_back_first(&overlap_sum(h, 1), 1, &a, &s)?, FrameTag::Vector, label)
}

/// `Q = q`, `P = p`. Candidates: transport kernel, coherent overlap, and `c_h` times the overlap.
pub fn builtin_identity(h: f64) -> Result<Builtin, TransformError> {
    let spec = TransformationSpec::new("identity", 1, relations(&[("q", "Q"), ("p", "P")])?)?
        .with_classical_map(affine_map([1.0, 0.0, 0.0, 1.0], [0.0, 0.0]), Some(vec!["q".into(), "p".into()]))?;
    let id = [1.0, 0.0, 0.0, 1.0];
    let ov = overlap_kernel(h, id, [0.0, 0.0], "overlap")?;
    let ch = Complex64::new(frame_constant(h, 1)?, 0.0);
    let scaled = ov.scale(ch).relabel("c_h*overlap");
    Ok(Builtin { spec, candidates: vec![transport_kernel(h, id, [0.0, 0.0], "transport")?, ov, scaled] })
}

/// The kernel as printed for the flip:
/// `exp(-(pi/2h)(q^2 + p^2 + q'^2 + p'^2 - 2iqp - 2iqq' + 2iqp'))`.
pub fn printed_flip_kernel(h: f64) -> Result<MKernel, TransformError> {
    let c = Complex64::new(-PI / (2.0 * h), 0.0);
    let b = ExponentBuilder::new(4)
        .product(0, 0, c)
        .product(1, 1, c)
        .product(2, 2, c)
        .product(3, 3, c)
        .product(0, 1, c * (-2.0 * I))
        .product(0, 2, c * (-2.0 * I))
        .product(0, 3, c * (2.0 * I));
    MKernel::closed(h, 1, GaussianSum::from_exponent(b.build()), FrameTag::Vector, "printed")
}

/// `q -> -P`, `p -> Q` via `q + ip = -P + iQ`, `q - ip = -P - iQ`.
///
/// Candidates in order: the printed kernel, the overlap centred at `(p, -q)`,
/// and the overlap centred at `(-p, q)`.
pub fn builtin_flip(h: f64) -> Result<Builtin, TransformError> {
    let spec = TransformationSpec::new("flip", 1, relations(&[("q + i*p", "-P + i*Q"), ("q - i*p", "-P - i*Q")])?)?
        .with_classical_map(affine_map([0.0, 1.0, -1.0, 0.0], [0.0, 0.0]), Some(vec!["p".into(), "-q".into()]))?;
    let candidates = vec![
        printed_flip_kernel(h)?,
        overlap_kernel(h, [0.0, 1.0, -1.0, 0.0], [0.0, 0.0], "overlap at (p,-q)")?,
        overlap_kernel(h, [0.0, -1.0, 1.0, 0.0], [0.0, 0.0], "overlap at (-p,q)")?,
    ];
    Ok(Builtin { spec, candidates })
}

/// Time-`t` flow of the unit oscillator under forcing `z`; relations carry plain
/// `Q`, `P` on the transformed side. Candidate: the transport kernel at `T(q, p)`.
pub fn builtin_forced_oscillator(t: f64, forcing: &ForcingProfile, h: f64) -> Result<Builtin, TransformError> {
    let (c, s) = (t.cos(), t.sin());
    let (zs, zc) = (forcing.z_s(t), forcing.z_c(t));
    let l1 = format!("{c:?}*q + {s:?}*p + {zs:?}");
    let l2 = format!("{:?}*q + {c:?}*p + {zc:?}", -s);
    let spec = TransformationSpec::new(
        &format!("forced-oscillator(t={t}, z={})", forcing.name),
        1,
        relations(&[(&l1, "Q"), (&l2, "P")])?,
    )?
    .with_classical_map(affine_map([c, s, -s, c], [zs, zc]), Some(vec![l1.clone(), l2.clone()]))?;
    let m = transport_kernel(h, [c, s, -s, c], [zs, zc], "transport")?;
    Ok(Builtin { spec, candidates: vec![m] })
}

pub fn builtin_forced_oscillator_params(params: &SpecParams, h: f64) -> Result<Builtin, TransformError> {
    let mut b = builtin_forced_oscillator(params.t, &params.forcing.profile(), h)?;
    b.spec = b.spec.with_params(params.clone());
    Ok(b)
}

/// `exp(2Q) = (q + p)^2`, `P = (p^2 - q^2)/2`; no classical map exists.
pub fn builtin_repulsive_oscillator() -> Result<TransformationSpec, TransformError> {
    Ok(TransformationSpec::new(
        "repulsive-oscillator",
        1,
        relations(&[("(q + p)^2", "exp(2*Q)"), ("(p^2 - q^2)/2", "P")])?,
    )?
    .non_bijective())
}

/// Per-sample transport rows centred at `(ln|q+p|, (p^2 - q^2)/2)`.
pub fn repulsive_transport_rows(h: f64, samples: &[PhasePoint]) -> Result<MKernel, TransformError> {
    let rows = samples
        .iter()
        .map(|z| {
            let (q, p) = (z.q[0], z.p[0]);
            let centre = [(q + p).abs().ln(), 0.5 * (p * p - q * q)];
            let b = ExponentBuilder::new(2).square(&[(0, 1.0)], -centre[0], -PI / h).square(
                &[(1, 1.0)],
                -centre[1],
                -PI / h,
            );
            (z.clone(), GaussianSum::from_block(b.build(), Poly::constant(2, Complex64::new(1.0 / h, 0.0))))
        })
        .collect();
    MKernel::rows(h, 1, rows, FrameTag::Kernel, "repulsive transport rows")
}
