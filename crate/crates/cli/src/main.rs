//! `nonholo` command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 rejected step,
//! 3 model or chart error, 4 not fit / deviation above tolerance,
//! 5 inconclusive.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "nonholo", version, about = "Reduced dynamics and fit-for-jumps analysis of actively constrained systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the reduced equations and write the trajectory as CSV.
    Simulate(Common),
    /// Scan for the quadratic jump term and report fit / not fit.
    CheckFit(Common),
    /// Compare the generic pipeline with the closed Roller Racer equations.
    OracleCompare(Common),
    /// Sweep the fast-oscillation amplitude scale against the averaged system.
    Vibrate(Common),
}

#[derive(Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the scan or oracle sample count.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Overrides the scan or oracle tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    StepRejected(String),
    Model(String),
    Rejected(String),
    Inconclusive(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::StepRejected(_) => 2,
            Self::Model(_) => 3,
            Self::Rejected(_) => 4,
            Self::Inconclusive(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::StepRejected(m) | Self::Model(m) | Self::Rejected(m) | Self::Inconclusive(m) => m,
        }
    }
}

impl From<nonholo::Error> for Failure {
    fn from(e: nonholo::Error) -> Self {
        match e {
            nonholo::Error::StepRejected { .. } => Self::StepRejected(e.to_string()),
            _ => Self::Model(e.to_string()),
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("NONHOLO_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("NONHOLO_THREADS: expected a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("NONHOLO_THREADS: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::CheckFit(args) => commands::check_fit(args),
        Command::OracleCompare(args) => commands::oracle_compare(args),
        Command::Vibrate(args) => commands::vibrate(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
