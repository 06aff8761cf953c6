use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::observables::{expr, smear_kernel, ForcingProfile, FunctionRegistry};
use crate::states::PhasePoint;

fn default_samples() -> SampleSet {
    SampleSet::default_set(DEFAULT_SEED)
}

#[test]
fn default_sample_set_shape() {
    let s = default_samples();
    assert_eq!(s.points.len(), 28);
    assert_eq!(s.points[0], PhasePoint::one(-2.0, -1.5));
    assert!(s.points.iter().all(|z| z.q[0].abs() <= 2.0 && z.p[0].abs() <= 1.5));
    assert_eq!(SampleSet::default_set(DEFAULT_SEED), s);
}

#[test]
fn spec_requires_2n_relations() {
    let reg = FunctionRegistry::default();
    let one = vec![Relation::parse("q", "Q", &reg).unwrap()];
    assert!(matches!(TransformationSpec::new("bad", 1, one), Err(TransformError::InvalidSpec(_))));
}

#[test]
fn wrong_classical_map_is_rejected() {
    let b = builtin_flip(1.0).unwrap();
    let wrong: ClassicalMap = std::sync::Arc::new(|z: &PhasePoint| PhasePoint::one(-z.p[0], z.q[0]));
    let spec = TransformationSpec::new("flip", 1, b.spec.relations.clone()).unwrap();
    assert!(matches!(spec.with_classical_map(wrong, None), Err(TransformError::DefinitionalIdentity { .. })));
}

#[test]
fn flip_spec_and_brackets() {
    let b = builtin_flip(1.0).unwrap();
    assert_eq!(b.spec.relations.len(), 2);
    assert_eq!(b.spec.n, 1);
    assert!(b.spec.check_definitional(100, 3).unwrap() < 1e-15);
    assert!(b.spec.bracket_check(100, 3).unwrap() < 1e-6);
    assert_eq!(b.spec.apply_map(&PhasePoint::one(1.0, 2.0)).unwrap(), PhasePoint::one(2.0, -1.0));
}

#[test]
fn repulsive_spec_rejects_map() {
    let s = builtin_repulsive_oscillator().unwrap();
    assert!(!s.bijective);
    assert!(s.classical_map().is_none());
    let t: ClassicalMap = std::sync::Arc::new(|z: &PhasePoint| z.clone());
    assert!(matches!(s.with_classical_map(t, None), Err(TransformError::InvalidSpec(_))));
}

#[test]
fn repulsive_smeared_sides() {
    let s = builtin_repulsive_oscillator().unwrap();
    for &(h, q, p) in &[(1.0, 0.3, 0.7), (0.5, -1.2, 0.4), (0.1, 2.0, -1.0)] {
        let z = PhasePoint::one(q, p);
        let a = smear_kernel(&s.relations[0].lhs, h, &z).unwrap();
        assert!((a.re - ((q + p).powi(2) + h / (2.0 * PI))).abs() < 1e-12);
        let b = smear_kernel(&s.relations[1].lhs, h, &z).unwrap();
        assert!((b.re - 0.5 * (p * p - q * q)).abs() < 1e-12);
        let e = smear_kernel(&s.relations[0].rhs, h, &z).unwrap();
        assert!((e.re - (2.0 * q + h / (2.0 * PI)).exp()).abs() < 1e-12 * e.re);
        let mirrored = z.neg();
        for r in &s.relations {
            let d = smear_kernel(&r.lhs, h, &z).unwrap() - smear_kernel(&r.lhs, h, &mirrored).unwrap();
            assert!(d.norm() < 1e-12);
        }
    }
}

#[test]
fn spec_json_round_trip() {
    let b = builtin_forced_oscillator(1.0, &ForcingProfile::constant(1.0), 1.0).unwrap();
    let j = b.spec.to_json();
    let back = TransformationSpec::from_json(&j, &FunctionRegistry::default()).unwrap();
    assert_eq!(back.to_json(), j);
    let z = PhasePoint::one(0.4, -0.9);
    assert_eq!(back.apply_map(&z), b.spec.apply_map(&z));
    let rep = builtin_repulsive_oscillator().unwrap();
    let back = TransformationSpec::from_json(&rep.to_json(), &FunctionRegistry::default()).unwrap();
    assert!(!back.bijective);
    assert!(TransformationSpec::from_json("{\"name\": 1", &FunctionRegistry::default()).is_err());
}

#[test]
fn kernel_json_round_trip() {
    for m in builtin_flip(0.7).unwrap().candidates {
        let back = MKernel::from_json(&m.to_json()).unwrap();
        let (z, w) = (PhasePoint::one(0.3, -0.2), PhasePoint::one(-0.5, 1.1));
        assert_eq!(back.eval(&z, &w).unwrap(), m.eval(&z, &w).unwrap());
        assert_eq!(back.frame, m.frame);
    }
}

#[test]
fn identity_transport_kernel_residual() {
    let b = builtin_identity(1.0).unwrap();
    let r = kernel_residual(&b.spec, &b.candidates[0], &default_samples(), &ResidualOptions::default()).unwrap();
    assert!(r.pass && r.max_norm <= 1e-10, "{}", r.max_norm);
    assert_eq!(r.entries.len(), 56);
}

#[test]
fn forced_oscillator_reduces_to_identity_at_t0() {
    let b = builtin_forced_oscillator(0.0, &ForcingProfile::zero(), 1.0).unwrap();
    let id = builtin_identity(1.0).unwrap();
    for (z, w) in sample_pairs(10, 1) {
        let a = b.candidates[0].eval(&z, &w).unwrap();
        let e = id.candidates[0].eval(&z, &w).unwrap();
        assert!((a - e).norm() < 1e-15);
    }
}

#[test]
fn forced_oscillator_kernel_residuals() {
    for (t, f) in [(PI / 3.0, ForcingProfile::zero()), (1.0, ForcingProfile::constant(1.0))] {
        let b = builtin_forced_oscillator(t, &f, 1.0).unwrap();
        let samples = default_samples().take(20);
        let closed = kernel_residual(&b.spec, &b.candidates[0], &samples, &ResidualOptions::default()).unwrap();
        assert!(closed.pass && closed.max_norm <= 1e-8, "{}", closed.max_norm);
        let quad = kernel_residual(&b.spec, &b.candidates[0], &samples, &ResidualOptions::quadrature()).unwrap();
        for (a, q) in closed.entries.iter().zip(&quad.entries) {
            assert!((a.value - q.value).norm() <= 1e-8);
        }
        let u = unitarity_residual(&b.candidates[0], &samples, 1e-6).unwrap();
        assert!(u.pass, "{}", u.max_norm);
    }
}

#[test]
fn repulsive_transport_ansatz_residual_is_order_h() {
    let spec = builtin_repulsive_oscillator().unwrap();
    let samples = default_samples().excluding_line(0.1);
    let m = repulsive_transport_rows(1.0, &samples.points).unwrap();
    let r = kernel_residual(&spec, &m, &samples, &ResidualOptions::default()).unwrap();
    // exp(2Q) relation: the Gaussian moment adds a factor exp(h/pi) on top of h/2pi
    let z = &samples.points[0];
    let s = (z.q[0] + z.p[0]).powi(2);
    let expect = s * ((1.0 / PI).exp() * (1.0 / (2.0 * PI)).exp()) - (s + 1.0 / (2.0 * PI));
    assert!((r.entries[0].value.re - expect).abs() < 1e-9 * expect.abs().max(1.0));
    assert!(r.max_for("r1") > 0.1);
    assert!(r.max_for("r2") < 1e-10);
}

#[test]
fn identity_vector_residuals() {
    let b = builtin_identity(0.8).unwrap();
    let pairs = sample_pairs(20, 5);
    for m in &b.candidates[1..] {
        let r = vector_residual(&b.spec, m, &pairs, &ResidualOptions::default()).unwrap();
        assert!(r.pass && r.max_norm <= 1e-8, "{} {}", m.label, r.max_norm);
    }
    let u = unitarity_residual(&b.candidates[1], &default_samples(), 1e-8).unwrap();
    assert!(u.pass, "{}", u.max_norm);
    let u = unitarity_residual(&b.candidates[0], &default_samples(), 1e-8).unwrap();
    assert!(u.pass, "{}", u.max_norm);
}

#[test]
fn flip_candidates() {
    let b = builtin_flip(1.0).unwrap();
    let pairs = sample_pairs(20, 9);
    let res: Vec<ResidualReport> = b
        .candidates
        .iter()
        .map(|m| vector_residual(&b.spec, m, &pairs, &ResidualOptions::default().with_tol(1e-6)).unwrap())
        .collect();
    assert!(res[2].pass, "{}", res[2].max_norm);
    assert!(!res[1].pass);
    // quadrature oracle agrees on the passing candidate
    let q = vector_residual(&b.spec, &b.candidates[2], &pairs[..5], &ResidualOptions::quadrature()).unwrap();
    assert!(q.max_norm <= 1e-6, "{}", q.max_norm);
    // frame-constant independence of verdicts
    for (m, r) in b.candidates.iter().zip(&res) {
        let opts = ResidualOptions { frame_scale: 2.0, ..ResidualOptions::default().with_tol(1e-6) };
        assert_eq!(vector_residual(&b.spec, m, &pairs, &opts).unwrap().pass, r.pass);
    }
}

#[test]
fn zero_kernel_is_not_unitary() {
    let m = MKernel::zero(1.0, 1, FrameTag::Kernel);
    let samples = default_samples().take(5);
    let u = unitarity_residual(&m, &samples, 1e-6).unwrap();
    assert!(!u.pass);
    for e in &u.entries {
        let gram = (-(PI / 2.0) * e.z.dist2(e.z2.as_ref().unwrap())).exp();
        assert!((e.value.norm() - gram).abs() < 1e-10);
    }
}

#[test]
fn csv_and_json_reports() {
    let b = builtin_identity(1.0).unwrap();
    let r =
        kernel_residual(&b.spec, &b.candidates[0], &default_samples().take(3), &ResidualOptions::default()).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf, &["manifest line".to_string()]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# manifest line"));
    assert_eq!(lines.next(), Some("relation,q,p,q',p',re,im,abs"));
    assert_eq!(lines.count(), 6);
    let back: ResidualReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn opaque_relation_takes_quadrature_path() {
    let reg = FunctionRegistry::default();
    let spec = TransformationSpec::new(
        "cos",
        1,
        vec![Relation::parse("cos(q)", "cos(Q)", &reg).unwrap(), Relation::parse("p", "P", &reg).unwrap()],
    )
    .unwrap();
    let h = 0.5;
    let m = transport_kernel(h, [1.0, 0.0, 0.0, 1.0], [0.0, 0.0], "transport").unwrap();
    let samples = default_samples().take(2);
    let r = kernel_residual(&spec, &m, &samples, &ResidualOptions::default()).unwrap();
    assert_eq!(r.path, "quadrature");
    // smearing damps cos by exp(-h/8pi); the transport kernel adds exp(-h/4pi)
    for (e, z) in r.entries.iter().zip(&samples.points) {
        let expect = z.q[0].cos() * (-h / (8.0 * PI)).exp() * ((-h / (4.0 * PI)).exp() - 1.0);
        assert!((e.value.re - expect).abs() < 1e-8, "{} {}", e.value, expect);
    }
    assert!(r.max_for("r2") < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn residuals_are_linear_in_kernel(alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let b = builtin_flip(1.0).unwrap();
        let pairs = sample_pairs(4, 2);
        let (m1, m2) = (&b.candidates[0], &b.candidates[1]);
        let combo = m1.scale(Complex64::new(alpha, 0.0)).add(&m2.scale(Complex64::new(beta, 0.0))).unwrap();
        let o = ResidualOptions::default();
        let r1 = vector_residual(&b.spec, m1, &pairs, &o).unwrap();
        let r2 = vector_residual(&b.spec, m2, &pairs, &o).unwrap();
        let rc = vector_residual(&b.spec, &combo, &pairs, &o).unwrap();
        for ((a, b2), c) in r1.entries.iter().zip(&r2.entries).zip(&rc.entries) {
            let lin = a.value * alpha + b2.value * beta;
            prop_assert!((c.value - lin).norm() <= 1e-12 * lin.norm().max(1.0));
        }
        // the kernel system is affine in m: weights summing to one are preserved
        let f = builtin_forced_oscillator(0.7, &ForcingProfile::zero(), 1.0).unwrap();
        let id = builtin_identity(1.0).unwrap();
        let samples = SampleSet::grid(3, 3, 1.0, 1.0);
        let w = Complex64::new(alpha, 0.0);
        let combo = f.candidates[0].scale(w).add(&id.candidates[0].scale(Complex64::new(1.0, 0.0) - w)).unwrap();
        let ra = kernel_residual(&f.spec, &f.candidates[0], &samples, &o).unwrap();
        let rb = kernel_residual(&f.spec, &id.candidates[0], &samples, &o).unwrap();
        let rc = kernel_residual(&f.spec, &combo, &samples, &o).unwrap();
        for ((a, b2), c) in ra.entries.iter().zip(&rb.entries).zip(&rc.entries) {
            let lin = a.value * w + b2.value * (Complex64::new(1.0, 0.0) - w);
            prop_assert!((c.value - lin).norm() <= 1e-12 * lin.norm().max(1.0));
        }
    }
}

#[test]
fn expr_sources_survive() {
    let b = builtin_forced_oscillator(PI / 3.0, &ForcingProfile::zero(), 1.0).unwrap();
    let l = &b.spec.relations[0];
    let reparsed = expr(&l.lhs_src).unwrap();
    let z = PhasePoint::one(0.3, 0.4);
    assert!((reparsed.eval(&z.q, &z.p) - l.lhs.eval(&z.q, &z.p)).norm() < 1e-15);
}
