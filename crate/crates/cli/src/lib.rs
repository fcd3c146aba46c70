//! `bowlforge` command line: solve, classify and verify rotational translators, and sweep
//! parameter grids.
//!
//! Exit codes: 0 success, 1 a verification failed, 2 the speed or the arguments did not
//! parse, 3 the speed is not admissible, 4 numerical or i/o failure.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;
pub mod sweep;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

pub use error::CliError;
pub use manifest::{ConfigOverrides, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "bowlforge",
    version,
    about = "Rotational translating solitons of curvature flows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the profile and export it with a JSON report.
    Solve(SolveArgs),
    /// Decide whether the translator is entire or lives over a ball.
    Classify(ClassifyArgs),
    /// Run the invariant checks and report pass or fail for each.
    Verify(VerifyArgs),
    /// Classify and solve every point of a grid of homogeneity degrees and dimensions.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SpeedArgs {
    /// `mean`, `harmonic-mean`, `scalar`, `gauss:<alpha>`, `power-mean:<p>:<alpha>` or
    /// `expr:<expression>`.
    #[arg(long)]
    pub speed: String,
    #[arg(long)]
    pub dim: usize,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub rmax: Option<f64>,
    #[arg(long)]
    pub rstart: Option<f64>,
    /// Declare blow-up once the slope exceeds this.
    #[arg(long)]
    pub vcap: Option<f64>,
    /// Relative integration tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

impl RunArgs {
    pub fn overrides(&self) -> Result<ConfigOverrides, CliError> {
        let flags = [
            ("--rmax", self.rmax),
            ("--rstart", self.rstart),
            ("--vcap", self.vcap),
            ("--tol", self.tol),
        ];
        for (flag, value) in flags {
            if let Some(x) = value {
                if !(x.is_finite() && x > 0.0) {
                    return Err(CliError::Parse(format!(
                        "{flag} must be a finite positive number, got {x}"
                    )));
                }
            }
        }
        Ok(ConfigOverrides {
            r_max: self.rmax,
            r_start: self.rstart,
            v_cap: self.vcap,
            tol: self.tol,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    /// Profile as CSV plus a JSON sidecar report.
    #[default]
    Csv,
    /// One JSON document holding the report and the profile.
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub speed: SpeedArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Output file; standard output when absent (then no sidecar is written).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub speed: SpeedArgs,
    /// Settings for the `--verify` integration, whose horizon defaults to 1000.
    #[command(flatten)]
    pub run: RunArgs,
    /// Integrate the profile and cross-check it against the verdict.
    #[arg(long)]
    pub verify: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub speed: SpeedArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Decreasing start radii for the start-regularization check.
    #[arg(long, value_delimiter = ',', default_value = "1e-3,1e-4,1e-5")]
    pub starts: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Speed identifier; `{alpha}` is replaced by each entry of `--alphas`.
    #[arg(long)]
    pub speed: String,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory receiving one CSV per run and `sweep.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; all cores by default.
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Classify(a) => commands::classify(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Sweep(a) => sweep::sweep(&a),
    }
}
