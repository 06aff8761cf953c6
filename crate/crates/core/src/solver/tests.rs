use std::f64::consts::PI;

use num_complex::Complex64;

use super::*;
use crate::observables::{ForcingProfile, FunctionRegistry};
use crate::states::PhasePoint;
use crate::transforms::{
    builtin_forced_oscillator, builtin_identity, builtin_repulsive_oscillator, kernel_residual,
    repulsive_transport_rows, Relation, ResidualOptions, Row, TransformationSpec,
};

fn certify(spec: &TransformationSpec, r: &SolveResult, tol: f64) {
    let again = kernel_residual(
        spec,
        &r.kernel,
        &SampleSet { description: String::new(), points: sample_points(r) },
        &ResidualOptions::default().with_tol(tol),
    )
    .unwrap();
    assert_eq!(again.entries.len(), r.report.entries.len());
    for (a, b) in again.entries.iter().zip(&r.report.entries) {
        assert!((a.value - b.value).norm() <= 1e-12);
    }
}

fn sample_points(r: &SolveResult) -> Vec<PhasePoint> {
    let mut pts: Vec<PhasePoint> = Vec::new();
    for e in &r.report.entries {
        if !pts.iter().any(|z| z.dist2(&e.z) < 1e-24) {
            pts.push(e.z.clone());
        }
    }
    pts
}

fn row_values(m: &crate::transforms::MKernel, z: &PhasePoint) -> Vec<Complex64> {
    match m.row(z).unwrap() {
        Row::Discrete { values, .. } => values,
        Row::Gaussian(_) => panic!("grid row expected"),
    }
}

#[test]
fn grid_identity_meets_tolerance_and_certifies() {
    let b = builtin_identity(1.0).unwrap();
    let cfg = SolveConfig { lambda: Some(1e-6), ..SolveConfig::default() };
    let r = solve_grid(&b.spec, 1.0, &cfg).unwrap();
    assert!(r.report.max_norm <= 1e-6, "{}", r.report.max_norm);
    assert!(r.report.pass && r.converged && !r.failed);
    certify(&b.spec, &r, 1e-6);
}

#[test]
fn grid_forced_oscillator_quarter_period() {
    let b = builtin_forced_oscillator(PI / 4.0, &ForcingProfile::zero(), 1.0).unwrap();
    let r = solve_grid(&b.spec, 1.0, &SolveConfig::default()).unwrap();
    assert!(r.report.max_norm <= 1e-6, "{}", r.report.max_norm);
}

#[test]
fn grid_repulsive_is_even_in_the_label() {
    let spec = builtin_repulsive_oscillator().unwrap();
    for h in [1.0, 0.5] {
        let r = solve_grid(&spec, h, &SolveConfig::default()).unwrap();
        assert!(r.report.max_norm <= 1e-6, "h = {h}: {}", r.report.max_norm);
        assert!(r.report.entries.iter().all(|e| (e.z.q[0] + e.z.p[0]).abs() >= 0.1));
        // rows at -z come from the stored generator
        for z in sample_points(&r) {
            let a = row_values(&r.kernel, &z);
            let b = row_values(&r.kernel, &z.neg());
            let d = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(d <= 1e-6, "parity defect {d} at {z:?}");
        }
    }
}

#[test]
fn grid_config_errors() {
    let b = builtin_identity(1.0).unwrap();
    let coarse = SolveConfig { spacing: Some(0.8), ..SolveConfig::default() };
    assert!(matches!(solve_grid(&b.spec, 1.0, &coarse), Err(SolverError::GridTooCoarse { .. })));
    let neg = SolveConfig { lambda: Some(-1.0), ..SolveConfig::default() };
    assert!(matches!(solve_grid(&b.spec, 1.0, &neg), Err(SolverError::InvalidConfig(_))));
    // two proportional relations leave a zero singular value
    let reg = FunctionRegistry::default();
    let rels = vec![Relation::parse("q", "Q", &reg).unwrap(), Relation::parse("2*q", "2*Q", &reg).unwrap()];
    let deg = TransformationSpec::new("degenerate", 1, rels).unwrap();
    let zero = SolveConfig { lambda: Some(0.0), ..SolveConfig::default() };
    assert!(matches!(solve_grid(&deg, 1.0, &zero), Err(SolverError::IllConditioned { .. })));
    assert!(solve_grid(&deg, 1.0, &SolveConfig::default()).is_ok());
}

#[test]
fn l_curve_is_monotone_and_tends_to_rhs_norm() {
    let b = builtin_identity(1.0).unwrap();
    let lambdas = [0.0, 1e-6, 1e-3, 1.0, 1e3, 1e9];
    let rows = l_curve(&b.spec, 1.0, &SolveConfig::default(), &lambdas).unwrap();
    assert_eq!(rows.len(), lambdas.len());
    for w in rows.windows(2) {
        assert!(w[0].residual_norm <= w[1].residual_norm, "{w:?}");
        assert!(w[0].solution_norm >= w[1].solution_norm, "{w:?}");
    }
    let last = rows.last().unwrap();
    assert!((last.rhs_norm - last.residual_norm).abs() <= 1e-6 * last.rhs_norm, "{last:?}");
    assert!(rows[0].residual_norm <= 1e-10);
}

#[test]
fn solves_are_bit_identical() {
    let spec = builtin_repulsive_oscillator().unwrap();
    let cfg = SolveConfig::default();
    let a = solve_grid(&spec, 1.0, &cfg).unwrap().to_json();
    let b = solve_grid(&spec, 1.0, &cfg).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn fit_forced_oscillator_from_transport() {
    let b = builtin_forced_oscillator(1.0, &ForcingProfile::zero(), 1.0).unwrap();
    let cfg = SolveConfig { ansatz: Ansatz::GaussianAnsatz, ..SolveConfig::default() };
    let r = fit_gaussian_ansatz(&b.spec, 1.0, &cfg).unwrap();
    assert!(r.report.max_norm <= 1e-8, "{}", r.report.max_norm);
    assert!(r.iterations <= 5 && r.converged && !r.failed);
    certify(&b.spec, &r, 1e-6);
}

#[test]
fn fit_recovers_identity_from_perturbation() {
    let b = builtin_identity(1.0).unwrap();
    let start = perturb_kernel(&b.candidates[0], 0.1, 7).unwrap();
    let cfg0 = SolveConfig::default();
    let before = kernel_residual(&b.spec, &start, &cfg0.sample_set(true), &ResidualOptions::default()).unwrap();
    assert!(before.max_norm > 1e-3);
    let cfg = SolveConfig { init: Init::Custom { kernel: start }, ..cfg0 };
    let r = fit_gaussian_ansatz(&b.spec, 1.0, &cfg).unwrap();
    assert!(r.report.max_norm <= 1e-8, "{} after {} steps", r.report.max_norm, r.iterations);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    certify(&b.spec, &r, 1e-6);
}

#[test]
fn fit_improves_repulsive_rows() {
    let spec = builtin_repulsive_oscillator().unwrap();
    let mut samples = SampleSet::default_set(DEFAULT_SEED);
    samples.points.retain(|z| z.q[0] + z.p[0] > 0.1);
    let init = repulsive_transport_rows(1.0, &samples.points).unwrap();
    let before = kernel_residual(&spec, &init, &samples, &ResidualOptions::default()).unwrap();
    let cfg = SolveConfig {
        samples: Some(samples),
        init: Init::Custom { kernel: init },
        ansatz: Ansatz::GaussianAnsatz,
        ..SolveConfig::default()
    };
    let r = fit_gaussian_ansatz(&spec, 1.0, &cfg).unwrap();
    assert!(r.report.max_norm * 10.0 <= before.max_norm, "{} vs {}", r.report.max_norm, before.max_norm);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    assert!((r.history[0] - crate::solver::residual_norm(&before)).abs() <= 1e-10 * r.history[0]);
}

#[test]
fn fit_rejects_opaque_and_mapless_specs() {
    let reg = FunctionRegistry::default();
    let rels = vec![Relation::parse("q", "cos(Q)", &reg).unwrap(), Relation::parse("p", "P", &reg).unwrap()];
    let spec = TransformationSpec::new("opaque", 1, rels).unwrap();
    assert!(matches!(
        fit_gaussian_ansatz(&spec, 1.0, &SolveConfig::default()),
        Err(SolverError::Transform(crate::transforms::TransformError::Unsupported(_)))
    ));
    let rep = builtin_repulsive_oscillator().unwrap();
    assert!(matches!(fit_gaussian_ansatz(&rep, 1.0, &SolveConfig::default()), Err(SolverError::InvalidConfig(_))));
}

#[test]
fn config_and_result_round_trip() {
    let cfg: SolveConfig = serde_json::from_str(r#"{"lambda": 1e-5, "ansatz": "gaussian-ansatz"}"#).unwrap();
    assert_eq!(cfg.lambda, Some(1e-5));
    assert_eq!(cfg.max_iter, 50);
    let back: SolveConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);

    let b = builtin_forced_oscillator(1.0, &ForcingProfile::zero(), 1.0).unwrap();
    let r = fit_gaussian_ansatz(&b.spec, 1.0, &SolveConfig::default()).unwrap();
    let parsed: SolveResult = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(parsed.to_json(), r.to_json());
    let mut buf = Vec::new();
    r.write_history_csv(&mut buf, &["run".into()]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("# run\niteration,residual_norm\n0,"));
}
