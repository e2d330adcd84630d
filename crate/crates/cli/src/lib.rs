//! Command-line front end: reads a run configuration, dispatches to the
//! solver, verifier, simulator or chain oracle, and writes a JSON summary
//! plus CSV curves into the output directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sspolicy::oracle::OracleError;
use sspolicy::{PolicyError, SimError, SolverError};
use thiserror::Error;

pub use config::RunConfig;

/// Failure of a command, mapped onto the process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::NoSolution(_) => 3,
            Self::Verification(_) => 4,
            Self::Io(_) | Self::Other(_) => 1,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidParams(_) | SolverError::InvalidInput(_) => Self::Validation(e.to_string()),
            SolverError::NoSolution { .. } | SolverError::NoBand { .. } | SolverError::BandNotBracketed(_) => {
                Self::NoSolution(e.to_string())
            }
            other => Self::Other(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ConfigInvalid(_) => Self::Validation(e.to_string()),
            other => Self::Other(other.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::InvalidPolicy(_) => Self::Validation(e.to_string()),
            PolicyError::VerificationFailed { .. } => Self::Verification(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::SpecInvalid(_) => Self::Validation(e.to_string()),
            other => Self::Other(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sspolicy", version, about = "Joint (s, S) ordering and dynamic pricing for Brownian inventory")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "sspolicy.toml")]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Simulation seed; overrides `sim.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write the first replication's path to `trajectory.csv`.
    #[arg(long, global = true)]
    pub dump_trajectory: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Solve for the optimal policy; writes summary, curves and policy file.
    Solve,
    /// Optimal average profit for a fixed band.
    Evaluate {
        #[arg(long = "s", allow_negative_numbers = true)]
        reorder_level: f64,
        #[arg(long = "S", allow_negative_numbers = true)]
        order_up_to: f64,
    },
    /// Monte-Carlo average profit of a stored policy.
    Simulate {
        #[arg(long)]
        policy: PathBuf,
    },
    /// Solve the discretized chain and compare it with the solver.
    Oracle,
    /// Check the upper-bound conditions on the solved value function.
    Verify,
    /// Run every stage and cross-compare.
    Report,
}

/// Loads the configuration, applies flag overrides, validates, and runs `cli.command`.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut config = RunConfig::load(&cli.global.config)?;
    if let Some(seed) = cli.global.seed {
        config.sim.seed = seed;
    }
    if let Some(dir) = &cli.global.out {
        config.output.dir = dir.clone();
    }
    let params = config.validate()?;
    commands::dispatch(&cli.command, &config, &params, cli.global.dump_trajectory)
}
