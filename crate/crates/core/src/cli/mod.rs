//! The `pmech` batch driver: argument parsing, run manifests, verification
//! suites and the subcommands. Exit codes: 0 pass, 1 numeric failure, 2 usage
//! or parse error.

mod commands;
mod suites;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use suites::{branch_table_ok, run_suite, Check, Suite, SuiteOptions, SuiteReport};

use crate::nonbijective::NonbijectiveError;
use crate::observables::ObservableError;
use crate::solver::SolverError;
use crate::states::StateError;
use crate::transforms::{TransformError, DEFAULT_SEED};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) => EXIT_FAIL,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(format!("csv: {e}"))
    }
}

impl From<ObservableError> for CliError {
    fn from(e: ObservableError) -> Self {
        match e {
            ObservableError::Parse { .. } | ObservableError::GrowthRejected(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<StateError> for CliError {
    fn from(e: StateError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TransformError> for CliError {
    fn from(e: TransformError) -> Self {
        match e {
            TransformError::Observable(o) => o.into(),
            TransformError::Json(j) => j.into(),
            TransformError::Io(i) => i.into(),
            TransformError::InvalidSpec(_) | TransformError::DefinitionalIdentity { .. } | TransformError::State(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Transform(t) => t.into(),
            SolverError::InvalidConfig(_) | SolverError::GridTooCoarse { .. } | SolverError::IllConditioned { .. } => {
                CliError::Usage(e.to_string())
            }
            SolverError::Io(i) => i.into(),
        }
    }
}

impl From<NonbijectiveError> for CliError {
    fn from(e: NonbijectiveError) -> Self {
        match e {
            NonbijectiveError::Transform(t) => t.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// Recorded verbatim into every output artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub inputs: Vec<String>,
    pub h: Vec<f64>,
    pub tol: Option<f64>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<String>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub version: String,
}

impl RunManifest {
    fn new(argv: &[String], common: &Common, inputs: Vec<String>, h: Vec<f64>) -> Self {
        Self {
            command: argv.to_vec(),
            inputs,
            h,
            tol: common.tol,
            seed: common.seed,
            threads: common.threads,
            out: common.out.as_ref().map(|p| p.display().to_string()),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// CSV comment lines carrying the manifest.
    pub fn csv_header(&self) -> Vec<String> {
        vec![format!("manifest {}", serde_json::to_string(self).expect("manifest serializes"))]
    }
}

/// On-disk JSON artifact: the manifest next to a typed payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope {
    pub kind: String,
    pub manifest: RunManifest,
    pub payload: serde_json::Value,
}

pub fn write_envelope<T: Serialize>(
    dir: &Path,
    name: &str,
    kind: &str,
    manifest: &RunManifest,
    payload: &T,
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let env = Envelope { kind: kind.into(), manifest: manifest.clone(), payload: serde_json::to_value(payload)? };
    std::fs::write(&path, serde_json::to_string_pretty(&env)? + "\n")?;
    Ok(path)
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Relative or absolute tolerance overriding the command default.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads; also read from PMECH_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory for JSON and CSV artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum System {
    Kernel,
    Vector,
    Unitarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuiltinName {
    Identity,
    Flip,
    ForcedOscillator,
    Repulsive,
}

#[derive(Debug, Parser)]
#[command(name = "pmech", version, about = "Coherent-state checks, smearing and kernel solves")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a verification suite; exit 0 iff every required check passes.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Planck parameter(s), comma separated.
        #[arg(long, value_delimiter = ',')]
        h: Vec<f64>,
        #[arg(long, allow_negative_numbers = true)]
        t: Option<f64>,
    },
    /// Expectation of a classical observable in the coherent state at (q, p).
    Expect {
        expr: String,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        q: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        p: f64,
    },
    /// Matrix element <P(f) * v_(q,p), v_(q2,p2)>.
    MatrixElement {
        expr: String,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        q: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        p: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        q2: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        p2: f64,
    },
    /// Residual of a kernel (or every built-in candidate) against a spec.
    Residual {
        /// Spec JSON file.
        spec: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "spec")]
        builtin: Option<BuiltinName>,
        /// Kernel JSON file; defaults to the built-in candidates.
        #[arg(long)]
        kernel: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "kernel")]
        system: System,
        /// Force quadrature for the outer integrals.
        #[arg(long)]
        quadrature: bool,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
        t: f64,
        /// Constant forcing for the forced oscillator.
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        forcing: f64,
    },
    /// Solve the kernel equations of a spec.
    Solve {
        /// Spec JSON file.
        spec: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "spec")]
        builtin: Option<BuiltinName>,
        /// Solver config JSON file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
        t: f64,
    },
    /// h -> 0 sweep of an expectation against the classical value.
    Limit {
        expr: String,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        q: f64,
        #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
        p: f64,
        /// Planck parameters, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 0.5, 0.1, 0.01])]
        h: Vec<f64>,
    },
    /// Summarize JSON artifacts; exit 1 if any of them records a failure.
    Report {
        /// Artifact files or directories.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn thread_count(common: &Common) -> Result<Option<usize>, CliError> {
    if let Some(t) = common.threads {
        return Ok(Some(t));
    }
    match std::env::var("PMECH_THREADS") {
        Ok(v) => {
            v.trim().parse().map(Some).map_err(|_| CliError::Usage(format!("PMECH_THREADS must be a count, got '{v}'")))
        }
        Err(_) => Ok(None),
    }
}

/// Parses `args` and runs the command; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = thread_count(&cli.common).and_then(|threads| {
        let mut common = cli.common.clone();
        common.threads = threads;
        match threads {
            Some(0) => Err(CliError::Usage("thread count must be positive".into())),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                // The pool needs a Send closure, so stdout is buffered until the command ends.
                let (r, buf) = pool.install(|| {
                    let mut buf = Vec::new();
                    let r = commands::dispatch(&cli.command, &common, &argv, &mut buf);
                    (r, buf)
                });
                out.write_all(&buf)?;
                r
            }
            None => commands::dispatch(&cli.command, &common, &argv, out),
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
