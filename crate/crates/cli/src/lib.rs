//! Command-line driver: JSON configs in, `report.json` and `fields.csv` out.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use schouten_core::Error as CoreError;

pub use config::RunConfig;
pub use report::Report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Solver(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Solver(_) | CliError::Io(_) => EXIT_SOLVER,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        use CoreError::*;
        let msg = e.to_string();
        match e {
            UnsupportedDimension { .. }
            | ResolutionTooSmall { .. }
            | DegenerateBounds { .. }
            | NonUniformSpacing { .. }
            | SizeMismatch { .. }
            | NonFinite { .. }
            | MetricNotPositiveDefinite { .. }
            | MissingSchouten
            | NonPositiveTarget { .. }
            | BandUnresolved { .. }
            | KListNotIncreasing
            | InvalidConfig { .. }
            | NotFlat
            | ChiNotConvex { .. }
            | Parse(_)
            | Eval { .. } => CliError::Validation(msg),
            _ => CliError::Solver(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "schouten", version, about = "Dirichlet solver for the conformal Schouten determinant equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Cutoff list, overriding `k_list`.
    #[arg(long, global = true, value_delimiter = ',', value_name = "a,b,c")]
    pub k_list: Option<Vec<u32>>,
    /// Worker threads (falls back to SCHOUTEN_THREADS, then all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Curvature and commutator self-convergence on the configured metric.
    GeometryCheck,
    /// Check the subsolution, supersolution and chi.
    VerifyBarriers,
    /// Smallest admissible shift for the cutoff schedule.
    SelectLambda,
    /// One solve, with psi = 1 (empty k list) or a single k.
    Solve,
    /// Solve along the k list, warm-starting each stage.
    Homotopy,
    /// Grid-halving study against `exact_solution`.
    MmsConvergence {
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GeometryCheck => "geometry-check",
            Command::VerifyBarriers => "verify-barriers",
            Command::SelectLambda => "select-lambda",
            Command::Solve => "solve",
            Command::Homotopy => "homotopy",
            Command::MmsConvergence { .. } => "mms-convergence",
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("SCHOUTEN_THREADS") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Validation(format!("SCHOUTEN_THREADS must be a count, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn resolved_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let mut cfg = config::load(path)?;
    if let Some(ks) = &cli.k_list {
        config::check_k_list(ks)?;
        cfg.k_list = ks.clone();
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let setup = thread_count(cli.threads).and_then(|t| resolved_config(&cli).map(|c| (t, c)));
    let (threads, cfg) = match setup {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_SOLVER;
        }
    };
    let mut rep = Report::new(cli.command.name(), &cfg);
    rep.set("run.threads", pool.current_num_threads());
    let outcome = pool.install(|| commands::dispatch(cli.command, &cfg, &mut rep));
    let code = match &outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_SOLVER,
        Err(e) => e.exit_code(),
    };
    rep.set("run.status", match &outcome {
        Ok(true) => "pass",
        Ok(false) => "fail",
        Err(_) => "error",
    });
    rep.set("run.exit_code", code);
    if let Err(e) = &outcome {
        rep.set("run.error", e.to_string());
        eprintln!("error: {e}");
    }
    let path = cfg.output_dir.join("report.json");
    if let Err(e) = rep.write(&path) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return if code == EXIT_OK { EXIT_SOLVER } else { code };
    }
    println!("{} {}: wrote {}", cli.command.name(), rep.status(), path.display());
    code
}
