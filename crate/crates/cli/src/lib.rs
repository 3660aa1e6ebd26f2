//! Command-line front end: config ingestion, experiment runs, manifests.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 a check
//! ran and failed.

pub mod config;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use switchpdmp::jump::replicate_seed;

pub use config::{CommandKind, ExperimentConfig, RunArgs};
pub use run::{execute, Summary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Validation(String),
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => EXIT_INVALID,
            Failure::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<switchpdmp::Error> for Failure {
    fn from(e: switchpdmp::Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "switchpdmp", version, about = "Randomly switched vector fields: simulation and growth-rate analysis")]
pub struct Cli {
    /// Experiment config file (TOML). Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $SWITCHPDMP_OUT, then ./switchpdmp-out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for replicate ensembles. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one PDMP path; writes trajectory.csv and events.csv.
    Simulate(RunArgs),
    /// Estimate a growth rate of the linearization or one of its blocks.
    Lyapunov(RunArgs),
    /// Exact exponents of a 2-D lower-triangular family.
    Classify2d(RunArgs),
    /// Top exponent of a block-triangular family versus its blocks.
    CheckTriangular(RunArgs),
    /// Occupation histogram and near-face mass of a simulated path.
    Occupation(RunArgs),
    /// Log-norm slope of a simulated path against a target rate.
    Extinction(RunArgs),
    /// Lie-bracket rank at a point.
    Bracket(RunArgs),
    /// Run a command over a grid of one parameter.
    Sweep(RunArgs),
    /// Re-run an experiment from its manifest.
    Rerun {
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub replicate_seeds: Vec<u64>,
    pub workers: usize,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub pass: Option<bool>,
}

pub const MANIFEST: &str = "manifest.json";

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("manifest: {e}")))
    }
}

/// Runs a resolved config into `cfg.output_dir`, writing the manifest last.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Summary, PathBuf), Failure> {
    let dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::Validation(format!("cannot create {}: {e}", dir.display())))?;
    let started = Instant::now();
    let summary = execute(cfg, Some(&dir))?;
    let mut recorded = cfg.clone();
    recorded.output_dir = Some(dir.clone());
    let manifest = Manifest {
        tool: "switchpdmp".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: recorded,
        master_seed: cfg.plan.seed,
        replicate_seeds: (0..cfg.replicates as u64).map(|r| replicate_seed(cfg.plan.seed, r)).collect(),
        workers: rayon_threads(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs: summary.outputs.clone(),
        pass: summary.pass,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join(MANIFEST), text + "\n")
        .map_err(|e| Failure::Validation(format!("cannot write manifest: {e}")))?;
    Ok((summary, dir))
}

fn rayon_threads() -> usize {
    switchpdmp::worker_count()
}

fn resolve(cli: &Cli, kind: CommandKind, args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.command = kind;
    args.apply(&mut cfg);
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    Ok(cfg)
}

/// Parses `argv` and runs the command; the return value is the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: invalid input: --workers must be positive");
            return EXIT_INVALID;
        }
        // Fails only if the pool already exists, in which case it is kept.
        let _ = rayon_pool(n);
    }
    let cfg = match &cli.command {
        Command::Rerun { manifest } => Manifest::load(manifest).map(|m| {
            let mut cfg = m.config;
            cfg.output_dir = Some(cli.out.clone().unwrap_or_else(|| {
                manifest.parent().unwrap_or(Path::new(".")).join("rerun")
            }));
            cfg
        }),
        Command::Simulate(a) => resolve(&cli, CommandKind::Simulate, a),
        Command::Lyapunov(a) => resolve(&cli, CommandKind::Lyapunov, a),
        Command::Classify2d(a) => resolve(&cli, CommandKind::Classify2d, a),
        Command::CheckTriangular(a) => resolve(&cli, CommandKind::CheckTriangular, a),
        Command::Occupation(a) => resolve(&cli, CommandKind::Occupation, a),
        Command::Extinction(a) => resolve(&cli, CommandKind::Extinction, a),
        Command::Bracket(a) => resolve(&cli, CommandKind::Bracket, a),
        Command::Sweep(a) => resolve(&cli, CommandKind::Sweep, a),
    };
    let result = cfg.and_then(|cfg| run_experiment(&cfg));
    match result {
        Ok((summary, dir)) => {
            let status = match summary.pass {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "done",
            };
            let est = summary.estimate.map(|v| format!(" estimate={v}")).unwrap_or_default();
            println!("{status}{est} -> {}", dir.display());
            if summary.pass == Some(false) {
                EXIT_CHECK_FAILED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn rayon_pool(n: usize) -> Result<(), Failure> {
    switchpdmp::set_worker_count(n).map_err(|e| Failure::Validation(e.to_string()))
}
