//! Scenario-driven command front end.
//!
//! Exit codes: 0 success, 1 input error, 2 model-range or thrashing
//! condition, 3 validation failure.

pub mod aggregate;
pub mod analyze;
pub mod scenario;

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use aggregate::{Aggregate, SweepRow};
pub use analyze::{analyze, AnalysisReport, Prediction};
pub use commands::{parse_values, validation_rows, ValidationRow, TOLERANCES};
pub use scenario::{AnalysisSpec, QnSpec, Resolved, Scenario};

/// Caps the worker threads used for replications.
pub const THREADS_ENV: &str = "CONTENTION_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "contention-lab", version, about = "Lock contention models and simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the closed-form models for a scenario.
    Analyze(ScenarioArgs),
    /// Run replications and write per-replication and aggregate results.
    Simulate(RunArgs),
    /// Run replications for each value of one parameter.
    Sweep(SweepArgs),
    /// Compare analytic predictions with simulation.
    Validate(RunArgs),
    /// Evaluate a root solver directly.
    Solve(SolveArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory (default: the scenario's `output.dir`, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub base: ScenarioArgs,
    /// Base seed; replication i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    #[value(name = "lambda")]
    Lambda,
    #[value(name = "M")]
    M,
    #[value(name = "k")]
    K,
    #[value(name = "D")]
    D,
    #[value(name = "policy")]
    Policy,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Lambda => "lambda",
            Axis::M => "M",
            Axis::K => "k",
            Axis::D => "D",
            Axis::Policy => "policy",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Comma-separated values; integer axes also take ranges like `1..40`.
    #[arg(long)]
    pub values: String,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(subcommand)]
    pub what: Solve,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Solve {
    /// Blocked fraction for a contention level alpha.
    Cubic {
        #[arg(long)]
        alpha: f64,
    },
    /// Response time from contention-free response r and coefficient a.
    Quadratic {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        a: f64,
    },
    /// The fold point (alpha*, beta*) of the cubic.
    Critical,
}

/// Command result short of an input error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Thrashing,
    ValidationFailed,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Thrashing => 2,
            Status::ValidationFailed => 3,
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<Status> {
    match &cli.command {
        Command::Analyze(a) => commands::cmd_analyze(a, out),
        Command::Simulate(a) => commands::cmd_simulate(a, out),
        Command::Sweep(a) => commands::cmd_sweep(a, out),
        Command::Validate(a) => commands::cmd_validate(a, out),
        Command::Solve(a) => commands::cmd_solve(&a.what, out),
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli, out) {
        Ok(status) => status.code(),
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}
