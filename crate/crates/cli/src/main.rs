//! `kslab`: command-line harness for the Keller–Segel radial laboratory.

mod checks;
mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "kslab",
    version,
    about = "Self-similar Keller–Segel solutions in the radial mass variable"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the nonexistence threshold C(d) with its bounds.
    Constant(ConstantArgs),
    /// Evolve the radial mass equation from a truncated datum.
    Solve(SolveArgs),
    /// Build the self-similar profile by shooting and/or extraction.
    Profile(ProfileArgs),
    /// Evaluate an explicit barrier solution.
    Barrier(BarrierArgs),
    /// Run the property suite.
    Verify(VerifyArgs),
    /// Matched profiles over a list of ε.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Imex,
    Bdf2,
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Shoot,
    Extract,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierKind {
    Upper,
    Lower,
}

/// Flags shared by every subcommand; not part of the resolved config.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON file with default values for any flag (a run manifest works too).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for data files and manifest.json; data goes to stdout
    /// without it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ConstantArgs {
    /// Dimensions: `3..10`, `3..=10`, `5` or `3,5,7`.
    #[arg(long)]
    dim: Option<String>,
    /// Relative quadrature tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    dim: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Truncation level of the initial datum.
    #[arg(long = "K")]
    #[serde(rename = "K")]
    k: Option<f64>,
    #[arg(long)]
    rmax: Option<f64>,
    /// Number of grid intervals.
    #[arg(long)]
    nr: Option<usize>,
    /// Geometric stretching of the grid; 0 selects a uniform grid.
    #[arg(long)]
    stretch: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Comma-separated output times.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct ProfileArgs {
    #[arg(long)]
    dim: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    ymax: Option<f64>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Tolerance on Φ(a) − ε.
    #[arg(long)]
    tol: Option<f64>,
    /// Anchor of the integrating factor.
    #[arg(long)]
    y_star: Option<f64>,
    /// Truncation level for extraction; the homogeneous datum without it.
    #[arg(long = "K")]
    #[serde(rename = "K")]
    k: Option<f64>,
    #[arg(long)]
    rmax: Option<f64>,
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Time of the snapshot used for extraction.
    #[arg(long)]
    t_extract: Option<f64>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct BarrierArgs {
    #[arg(long)]
    dim: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    kind: Option<BarrierKind>,
    /// Drift exponent, overriding `--kind`.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    rmax: Option<f64>,
    /// Number of radial samples.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    y_star: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    /// Named set of checks: `paper` (all), `quick`.
    #[arg(long)]
    #[serde(skip)]
    preset: Option<String>,
    /// Individual check, repeatable.
    #[arg(long = "check")]
    #[serde(skip)]
    checks: Option<Vec<String>>,
    #[arg(long)]
    dim: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Scale factor of the scaling check.
    #[arg(long)]
    scale: Option<f64>,
    /// Stop at the first failing check.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    fail_fast: bool,
    /// List the available checks and exit.
    #[arg(long)]
    #[serde(skip)]
    list: bool,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    dim: Option<u32>,
    /// Comma-separated values of ε.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long)]
    ymax: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

/// Caps the global thread pool by `KSLAB_THREADS`.
fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("KSLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "KSLAB_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Constant(a) => commands::constant(a),
        Command::Solve(a) => commands::solve(a),
        Command::Profile(a) => commands::profile(a),
        Command::Barrier(a) => commands::barrier(a),
        Command::Verify(a) => commands::verify(a),
        Command::Sweep(a) => commands::sweep(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kslab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
