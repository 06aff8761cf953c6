use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use super::{
    run_suite, write_envelope, BuiltinName, CliError, Command, Common, Envelope, RunManifest, SuiteOptions,
    SuiteReport, System, EXIT_FAIL, EXIT_PASS,
};
use crate::nonbijective::{kernel_nodes, parity_residual};
use crate::observables::{
    classical_sweep, expectation_vector, expr, matrix_element, matrix_element_sum, smear_kernel, ForcingProfile,
    FunctionRegistry,
};
use crate::solver::{fit_gaussian_ansatz, solve_grid, Ansatz, SolveConfig, SolveResult};
use crate::states::PhasePoint;
use crate::transforms::{
    builtin_flip, builtin_forced_oscillator, builtin_identity, builtin_repulsive_oscillator, kernel_residual,
    repulsive_transport_rows, sample_pairs, unitarity_residual, vector_residual, MKernel, ResidualOptions,
    ResidualReport, Row, SampleSet, TransformationSpec,
};

/// Agreement required between the smearing and matrix-element paths.
const CROSS_CHECK_TOL: f64 = 1e-10;

pub(super) fn dispatch(cmd: &Command, common: &Common, argv: &[String], out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Verify { suite, h, t } => verify(*suite, h, *t, common, argv, out),
        Command::Expect { expr, h, q, p } => expect(expr, *h, *q, *p, common, argv, out),
        Command::MatrixElement { expr, h, q, p, q2, p2 } => {
            matrix_element_cmd(expr, *h, [*q, *p, *q2, *p2], common, argv, out)
        }
        Command::Residual { spec, builtin, kernel, system, quadrature, h, t, forcing } => residual(
            ResidualArgs {
                spec: spec.as_deref(),
                builtin: *builtin,
                kernel: kernel.as_deref(),
                system: *system,
                quadrature: *quadrature,
                h: *h,
                t: *t,
                forcing: *forcing,
            },
            common,
            argv,
            out,
        ),
        Command::Solve { spec, builtin, config, h, t } => {
            solve(spec.as_deref(), *builtin, config.as_deref(), *h, *t, common, argv, out)
        }
        Command::Limit { expr, q, p, h } => limit(expr, *q, *p, h, common, argv, out),
        Command::Report { paths } => report(paths, out),
    }
}

fn fmt_complex(c: Complex64) -> String {
    let sign = if c.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", c.re, sign, c.im.abs())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_report_csv(dir: &Path, name: &str, r: &ResidualReport, manifest: &RunManifest) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let f = std::fs::File::create(dir.join(name))?;
    r.write_csv(std::io::BufWriter::new(f), &manifest.csv_header())?;
    Ok(())
}

fn verify(
    suite: super::Suite,
    h: &[f64],
    t: Option<f64>,
    common: &Common,
    argv: &[String],
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    if h.iter().any(|v| !(*v > 0.0)) {
        return Err(CliError::Usage("h must be positive".into()));
    }
    let opts = SuiteOptions { h: h.to_vec(), t, tol: common.tol, seed: common.seed };
    let manifest = RunManifest::new(argv, common, vec![], h.to_vec());
    let reports = run_suite(suite, &opts)?;
    let mut all = true;
    for s in &reports {
        print_suite(s, out)?;
        all &= s.pass;
        if let Some(dir) = &common.out {
            write_envelope(dir, &format!("verify_{}.json", s.suite), "suite", &manifest, s)?;
            for (i, r) in s.reports.iter().enumerate() {
                write_report_csv(dir, &format!("verify_{}_residual_{i}.csv", s.suite), r, &manifest)?;
            }
        }
    }
    writeln!(out, "overall: {}", verdict(all))?;
    Ok(if all { EXIT_PASS } else { EXIT_FAIL })
}

fn print_suite(s: &SuiteReport, out: &mut dyn Write) -> Result<(), CliError> {
    writeln!(out, "suite {}: {}", s.suite, verdict(s.pass))?;
    for c in &s.checks {
        let tag = if c.required {
            verdict(c.pass)
        } else if c.pass {
            "pass"
        } else {
            "fail"
        };
        writeln!(out, "  [{tag}] {:<64} {:>12.3e}  (tol {:.0e})", c.name, c.value, c.tol)?;
    }
    Ok(())
}

fn expect(
    src: &str,
    h: f64,
    q: f64,
    p: f64,
    common: &Common,
    argv: &[String],
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let f = expr(src)?;
    let z = PhasePoint::one(q, p);
    let s = smear_kernel(&f, h, &z)?;
    writeln!(out, "smear_kernel = {}", fmt_complex(s))?;
    let mut ok = true;
    let mut cross = None;
    if f.is_in_class() {
        let me = expectation_vector(&f, h, &z)?;
        let d = (me - s).norm();
        ok = d <= CROSS_CHECK_TOL * s.norm().max(1.0);
        writeln!(out, "matrix_element = {} (|diff| = {d:.3e}, {})", fmt_complex(me), verdict(ok))?;
        cross = Some(me);
    }
    if let Some(dir) = &common.out {
        let m = RunManifest::new(argv, common, vec![], vec![h]);
        let payload = serde_json::json!({
            "expr": src, "q": q, "p": p, "h": h,
            "smear_kernel": {"re": s.re, "im": s.im},
            "matrix_element": cross.map(|c| serde_json::json!({"re": c.re, "im": c.im})),
            "pass": ok,
        });
        write_envelope(dir, "expect.json", "expect", &m, &payload)?;
    }
    Ok(if ok { EXIT_PASS } else { EXIT_FAIL })
}

fn matrix_element_cmd(
    src: &str,
    h: f64,
    labels: [f64; 4],
    common: &Common,
    argv: &[String],
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let f = expr(src)?;
    let (z1, z2) = (PhasePoint::one(labels[0], labels[1]), PhasePoint::one(labels[2], labels[3]));
    let v = matrix_element(&f, h, &z1, &z2)?;
    writeln!(out, "matrix_element = {}", fmt_complex(v))?;
    let mut ok = true;
    if f.is_in_class() {
        let closed = matrix_element_sum(&f, h, 1)?.evaluate(&labels);
        let d = (closed - v).norm();
        ok = d <= CROSS_CHECK_TOL * v.norm().max(1.0);
        writeln!(out, "closed form in labels = {} (|diff| = {d:.3e}, {})", fmt_complex(closed), verdict(ok))?;
    }
    if let Some(dir) = &common.out {
        let m = RunManifest::new(argv, common, vec![], vec![h]);
        let payload = serde_json::json!({
            "expr": src, "labels": labels, "h": h, "value": {"re": v.re, "im": v.im}, "pass": ok,
        });
        write_envelope(dir, "matrix_element.json", "matrix-element", &m, &payload)?;
    }
    Ok(if ok { EXIT_PASS } else { EXIT_FAIL })
}

struct ResidualArgs<'a> {
    spec: Option<&'a Path>,
    builtin: Option<BuiltinName>,
    kernel: Option<&'a Path>,
    system: System,
    quadrature: bool,
    h: f64,
    t: f64,
    forcing: f64,
}

fn forcing_profile(c: f64) -> ForcingProfile {
    if c == 0.0 {
        ForcingProfile::zero()
    } else {
        ForcingProfile::constant(c)
    }
}

/// The spec and its candidate kernels for a built-in name.
fn builtin(
    name: BuiltinName,
    h: f64,
    t: f64,
    forcing: f64,
    seed: u64,
) -> Result<(TransformationSpec, Vec<MKernel>), CliError> {
    Ok(match name {
        BuiltinName::Identity => {
            let b = builtin_identity(h)?;
            (b.spec, b.candidates)
        }
        BuiltinName::Flip => {
            let b = builtin_flip(h)?;
            (b.spec, b.candidates)
        }
        BuiltinName::ForcedOscillator => {
            let b = builtin_forced_oscillator(t, &forcing_profile(forcing), h)?;
            (b.spec, b.candidates)
        }
        BuiltinName::Repulsive => {
            let spec = builtin_repulsive_oscillator()?;
            let samples = SolveConfig { seed, ..SolveConfig::default() }.sample_set(false);
            (spec, vec![repulsive_transport_rows(h, &samples.points)?])
        }
    })
}

fn load_spec(path: &Path) -> Result<TransformationSpec, CliError> {
    TransformationSpec::from_json(&read(path)?, &FunctionRegistry::default())
        .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), CliError::from(e))))
}

fn residual(a: ResidualArgs, common: &Common, argv: &[String], out: &mut dyn Write) -> Result<i32, CliError> {
    let mut inputs = Vec::new();
    let (spec, mut candidates) = match (a.spec, a.builtin) {
        (Some(p), _) => {
            inputs.push(p.display().to_string());
            (load_spec(p)?, vec![])
        }
        (None, Some(b)) => builtin(b, a.h, a.t, a.forcing, common.seed)?,
        (None, None) => return Err(CliError::Usage("give a spec file or --builtin".into())),
    };
    if let Some(k) = a.kernel {
        inputs.push(k.display().to_string());
        candidates = vec![MKernel::from_json(&read(k)?).map_err(|e| CliError::Usage(format!("{}: {e}", k.display())))?];
    }
    if candidates.is_empty() {
        return Err(CliError::Usage("a spec file needs --kernel".into()));
    }
    let mut opts = if a.quadrature { ResidualOptions::quadrature() } else { ResidualOptions::default() };
    opts.tol = common.tol;
    let manifest = RunManifest::new(argv, common, inputs, vec![a.h]);
    let samples = if spec.bijective {
        SampleSet::default_set(common.seed)
    } else {
        SolveConfig { seed: common.seed, ..SolveConfig::default() }.sample_set(false)
    };
    let mut all = true;
    for (i, m) in candidates.iter().enumerate() {
        let r = match a.system {
            System::Kernel => kernel_residual(&spec, m, &samples, &opts)?,
            System::Vector => vector_residual(&spec, m, &sample_pairs(20, common.seed), &opts)?,
            System::Unitarity => unitarity_residual(m, &samples.clone().take(20), common.tol.unwrap_or(1e-6))?,
        };
        writeln!(
            out,
            "{:<28} {:<28} max |r| = {:.3e}  rms = {:.3e}  tol = {:.0e}  {}",
            r.kernel,
            r.system,
            r.max_norm,
            r.rms_norm,
            r.tol,
            verdict(r.pass)
        )?;
        all &= r.pass;
        if let Some(dir) = &common.out {
            write_envelope(dir, &format!("residual_{i}.json"), "residual", &manifest, &r)?;
            write_report_csv(dir, &format!("residual_{i}.csv"), &r, &manifest)?;
        }
    }
    Ok(if all { EXIT_PASS } else { EXIT_FAIL })
}

#[allow(clippy::too_many_arguments)]
fn solve(
    spec_path: Option<&Path>,
    name: Option<BuiltinName>,
    config: Option<&Path>,
    h: f64,
    t: f64,
    common: &Common,
    argv: &[String],
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let mut inputs = Vec::new();
    let spec = match (spec_path, name) {
        (Some(p), _) => {
            inputs.push(p.display().to_string());
            load_spec(p)?
        }
        (None, Some(b)) => builtin(b, h, t, 0.0, common.seed)?.0,
        (None, None) => return Err(CliError::Usage("give a spec file or --builtin".into())),
    };
    let mut cfg = match config {
        Some(p) => {
            inputs.push(p.display().to_string());
            serde_json::from_str::<SolveConfig>(&read(p)?)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => SolveConfig { seed: common.seed, ..SolveConfig::default() },
    };
    if let Some(tol) = common.tol {
        cfg.residual_tol = tol;
    }
    let result = match cfg.ansatz {
        Ansatz::GridMinNorm => solve_grid(&spec, h, &cfg)?,
        Ansatz::GaussianAnsatz => fit_gaussian_ansatz(&spec, h, &cfg)?,
    };
    let r = &result.report;
    writeln!(out, "spec {}: {} ({} iterations)", spec.name, result.kernel.label, result.iterations)?;
    writeln!(out, "kernel residual: max |r| = {:.3e}  tol = {:.0e}  {}", r.max_norm, r.tol, verdict(r.pass))?;
    let d = &result.diagnostics;
    writeln!(
        out,
        "diagnostics: lambda = {:.3e}  solution norm = {:.6e}  residual norm = {:.3e}  condition = {}",
        d.lambda,
        d.solution_norm,
        d.residual_norm,
        d.condition.map(|c| format!("{c:.3e}")).unwrap_or_else(|| "inf".into())
    )?;
    if !spec.bijective {
        let parity = parity_residual(&result.kernel, &cfg.sample_set(false))?;
        writeln!(out, "parity residual: {parity:.3e}")?;
    }
    if let Some(dir) = &common.out {
        let manifest = RunManifest::new(argv, common, inputs, vec![h]);
        write_envelope(dir, "solve_result.json", "solve", &manifest, &result)?;
        write_report_csv(dir, "residual.csv", r, &manifest)?;
        let f = std::fs::File::create(dir.join("history.csv"))?;
        result.write_history_csv(std::io::BufWriter::new(f), &manifest.csv_header())?;
        write_slice(&dir.join("slice.dat"), &result, &manifest)?;
    }
    let ok = !result.failed && r.pass;
    Ok(if ok { EXIT_PASS } else { EXIT_FAIL })
}

/// `q' p' re im` of `m(z0, .)` at the first sample, blank line between `q'` blocks.
fn write_slice(path: &PathBuf, result: &SolveResult, manifest: &RunManifest) -> Result<(), CliError> {
    let z0 = result.report.entries.first().map(|e| e.z.clone()).unwrap_or_else(|| PhasePoint::one(0.0, 0.0));
    let nodes = kernel_nodes(&result.kernel);
    let values: Vec<Complex64> = match result.kernel.row(&z0)? {
        Row::Discrete { values, .. } => values,
        Row::Gaussian(g) => nodes.iter().map(|w| g.evaluate(w)).collect(),
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in manifest.csv_header() {
        writeln!(f, "# {line}")?;
    }
    writeln!(f, "# row at q = {}, p = {}\n# q' p' re im", z0.q[0], z0.p[0])?;
    let mut last = None;
    for (w, v) in nodes.iter().zip(values) {
        if last.is_some_and(|q: f64| q != w[0]) {
            writeln!(f)?;
        }
        last = Some(w[0]);
        writeln!(f, "{:?} {:?} {:?} {:?}", w[0], w[1], v.re, v.im)?;
    }
    f.flush()?;
    Ok(())
}

fn limit(
    src: &str,
    q: f64,
    p: f64,
    hs: &[f64],
    common: &Common,
    argv: &[String],
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let f = expr(src)?;
    if hs.iter().any(|h| !(*h > 0.0)) {
        return Err(CliError::Usage("h values must be positive".into()));
    }
    let sweep = classical_sweep(&f, &PhasePoint::one(q, p), hs)?;
    let write_table = |w: &mut dyn Write, header: &[String]| -> Result<(), CliError> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        let mut c = csv::Writer::from_writer(&mut *w);
        c.write_record(["h", "re", "im", "difference"])?;
        for r in &sweep.rows {
            c.write_record([
                format!("{:?}", r.h),
                format!("{:?}", r.expectation.re),
                format!("{:?}", r.expectation.im),
                format!("{:?}", r.difference),
            ])?;
        }
        c.flush()?;
        drop(c);
        writeln!(w, "# slope = {:?}\n# intercept = {:?}", sweep.slope, sweep.intercept)?;
        Ok(())
    };
    write_table(out, &[])?;
    if let Some(dir) = &common.out {
        let manifest = RunManifest::new(argv, common, vec![], hs.to_vec());
        std::fs::create_dir_all(dir)?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(dir.join("limit.csv"))?);
        write_table(&mut file, &manifest.csv_header())?;
        file.flush()?;
        write_envelope(dir, "limit.json", "limit", &manifest, &sweep)?;
    }
    Ok(EXIT_PASS)
}

fn collect_json(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn report(paths: &[PathBuf], out: &mut dyn Write) -> Result<i32, CliError> {
    let files = collect_json(paths)?;
    if files.is_empty() {
        return Err(CliError::Usage("no JSON artifacts found".into()));
    }
    let mut all = true;
    for f in files {
        let env: Envelope =
            serde_json::from_str(&read(&f)?).map_err(|e| CliError::Usage(format!("{}: {e}", f.display())))?;
        let (pass, detail) = match env.kind.as_str() {
            "suite" => {
                let s: SuiteReport = serde_json::from_value(env.payload)?;
                let failed: Vec<&str> =
                    s.checks.iter().filter(|c| c.required && !c.pass).map(|c| c.name.as_str()).collect();
                (s.pass, format!("{} checks, {} failed", s.checks.len(), failed.len()))
            }
            "residual" => {
                let r: ResidualReport = serde_json::from_value(env.payload)?;
                (r.pass, format!("{} on {}: max |r| = {:.3e}", r.kernel, r.system, r.max_norm))
            }
            "solve" => {
                let r: SolveResult = serde_json::from_value(env.payload)?;
                (
                    !r.failed && r.report.pass,
                    format!("max |r| = {:.3e}, {} iterations", r.report.max_norm, r.iterations),
                )
            }
            other => {
                let pass = env.payload.get("pass").and_then(|v| v.as_bool()).unwrap_or(true);
                (pass, other.to_string())
            }
        };
        all &= pass;
        writeln!(out, "{}: {} {} ({})", f.display(), env.kind, verdict(pass), detail)?;
    }
    Ok(if all { EXIT_PASS } else { EXIT_FAIL })
}
