//! Experiment driver for the `gridres` binary: training runs, λ and
//! action/observation-space sweeps, do-nothing baselines, evaluation of
//! checkpoints and SVG plots of training curves.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{ContingencySpec, ExperimentConfig};
pub use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<gridres::agent::AgentError> for CliError {
    fn from(e: gridres::agent::AgentError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gridres", version, about = "Train and evaluate resilient grid-control agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment config JSON, or a run manifest to re-execute.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Training steps per run.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Evaluation episodes.
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent and write its curves, checkpoint and manifest.
    Train(Common),
    /// Evaluate a checkpoint greedily.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate agents for every λ and seed.
    SweepLambda {
        #[command(flatten)]
        common: Common,
        /// Comma-separated λ values.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        /// Number of seeds per λ, counted up from --seed.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Train agents for every observation and action space.
    SweepSpaces {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Evaluate the do-nothing policy.
    Baseline(Common),
    /// Draw one SVG per metric from a curves CSV.
    Plot {
        #[arg(long)]
        curves: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Worker cap read from `GRIDRES_THREADS`.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("GRIDRES_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("GRIDRES_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}
