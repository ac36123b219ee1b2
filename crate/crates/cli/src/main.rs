//! `scatterbrain`: seeded experiment runner for the attention library.
//!
//! Every subcommand writes its artifacts plus a `manifest.json` into
//! `--out`. Exit codes: 0 on success, 1 on a compute error, 2 on a usage or
//! IO error.

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use clap::{Parser, Subcommand};
use scatterbrain::alloc_track::CountingAllocator;

use artifacts::Run;
use config::{ConfigFile, Emit, GlobalFlags};
use error::{CliError, CliResult};

#[global_allocator]
static ALLOCATOR: CountingAllocator = CountingAllocator;

#[derive(Debug, Parser)]
#[command(
    name = "scatterbrain",
    version,
    about = "Sparse + low-rank attention experiments"
)]
struct Cli {
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "scatterbrain-out")]
    out: PathBuf,
    /// JSON config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (default: config, then SB_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    emit: Option<Emit>,
    /// Permit n×n matrices with n > 2048.
    #[arg(long, global = true)]
    allow_materialize: bool,
    /// Clamp non-positive normalizers to EPS instead of failing.
    #[arg(long, global = true, value_name = "EPS")]
    clamp_normalizer: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the estimator on one batch and report its errors and budget use.
    Approx(commands::approx::Args),
    /// Decompose a matrix with the top-k, SVD, robust PCA and budgeted oracles.
    Oracle(commands::oracle::Args),
    /// Oracle errors across temperatures on clustered attention.
    Regimes(commands::regimes::Args),
    /// Monte-Carlo mean and variance of the estimators for fixed pairs.
    McStats(commands::stats::McArgs),
    /// Per-entry MSE of the estimators over a grid of inner products.
    MseCurve(commands::stats::CurveArgs),
    /// Correlation of matched-budget sparse and low-rank oracle errors.
    Correlate(commands::stats::CorrelateArgs),
    /// Wall time and peak heap against sequence length.
    Bench(commands::bench::Args),
    /// Write synthetic matrices or attention batches to files.
    Gen(commands::gen::Args),
}

const COMMANDS: [&str; 8] = [
    "approx",
    "oracle",
    "regimes",
    "mc-stats",
    "mse-curve",
    "correlate",
    "bench",
    "gen",
];

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Approx(_) => COMMANDS[0],
            Command::Oracle(_) => COMMANDS[1],
            Command::Regimes(_) => COMMANDS[2],
            Command::McStats(_) => COMMANDS[3],
            Command::MseCurve(_) => COMMANDS[4],
            Command::Correlate(_) => COMMANDS[5],
            Command::Bench(_) => COMMANDS[6],
            Command::Gen(_) => COMMANDS[7],
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = (SystemTime::now(), Instant::now());
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return ExitCode::from(2);
    }
    let flags = GlobalFlags {
        seed: cli.seed,
        threads: cli.threads,
        emit: cli.emit,
        allow_materialize: cli.allow_materialize,
        clamp_normalizer: cli.clamp_normalizer,
    };
    let fallback = config::Globals {
        seed: cli.seed.unwrap_or(0),
        threads: cli.threads.unwrap_or(0),
        emit: cli.emit.unwrap_or_default(),
        allow_materialize: cli.allow_materialize,
        clamp_normalizer: cli.clamp_normalizer,
    };
    let prepared = prepare(&cli, &flags);
    let (run, result) = match prepared {
        Ok((globals, cfg)) => {
            let mut run = Run::new(&cli.out, globals);
            let result = execute(&cli.command, &cfg, &mut run);
            (run, result)
        }
        Err(e) => (Run::new(&cli.out, fallback), Err(e)),
    };
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    let code = result.as_ref().err().map_or(0, CliError::exit_code);
    if let Err(e) = run.finish(cli.command.name(), cli.config.as_deref(), &result, started) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}

fn prepare(cli: &Cli, flags: &GlobalFlags) -> CliResult<(config::Globals, ConfigFile)> {
    let cfg = ConfigFile::load(cli.config.as_deref(), &COMMANDS)?;
    let globals = config::resolve_globals(flags, &cfg)?;
    if globals.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(globals.threads)
            .build_global()
            .map_err(|e| {
                CliError::Usage(format!("cannot start {} threads: {e}", globals.threads))
            })?;
    }
    Ok((globals, cfg))
}

fn execute(command: &Command, cfg: &ConfigFile, run: &mut Run) -> CliResult<()> {
    let section = cfg.section(command.name());
    macro_rules! dispatch {
        ($args:expr, $settings:ty, $run:path) => {{
            let s: $settings = config::merge($args, section)?;
            let value = serde_json::to_value(&s)?;
            run.set_settings(command.name(), &value);
            $run(run, &s)
        }};
    }
    use commands::*;
    match command {
        Command::Approx(a) => dispatch!(a, approx::Settings, approx::run),
        Command::Oracle(a) => dispatch!(a, oracle::Settings, oracle::run),
        Command::Regimes(a) => dispatch!(a, regimes::Settings, regimes::run),
        Command::McStats(a) => dispatch!(a, stats::McSettings, stats::run_mc),
        Command::MseCurve(a) => dispatch!(a, stats::CurveSettings, stats::run_curve),
        Command::Correlate(a) => dispatch!(a, stats::CorrelateSettings, stats::run_correlate),
        Command::Bench(a) => dispatch!(a, bench::Settings, bench::run),
        Command::Gen(a) => dispatch!(a, gen::Settings, gen::run),
    }
}

/// Reads a matrix, mapping file problems to usage errors.
pub fn load_input(path: &Path) -> CliResult<scatterbrain::Matrix> {
    scatterbrain::io::load_matrix(path)
        .map_err(|e| CliError::Usage(format!("cannot load {}: {e}", path.display())))
}
