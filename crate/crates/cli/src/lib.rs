//! Command-line pipelines over `ppm_core`.
//!
//! Each subcommand reads CSV/JSON inputs, runs one stage (simulation,
//! fitting, prediction, decomposition) and writes CSV for bulk data and
//! JSON for summaries. `report` chains every demonstration into a single
//! directory.

pub mod args;
pub mod commands;
pub mod output;
pub mod report;

use thiserror::Error;

use args::{Cli, Command};

/// Environment variable that overrides `--seed` when set.
pub const SEED_ENV: &str = "PPM_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or inputs; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running a valid request; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ppm_core::Error> for CliError {
    fn from(e: ppm_core::Error) -> Self {
        use ppm_core::Error as E;
        match e {
            E::InvalidSpec(_) | E::Domain(_) | E::EmptyDataset(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Applies the seed override from the environment, if any.
pub fn apply_seed_env(cli: &mut Cli, env: Option<String>) -> Result<(), CliError> {
    let Some(raw) = env else { return Ok(()) };
    let seed: u64 = raw.trim().parse().map_err(|_| {
        CliError::Usage(format!(
            "{SEED_ENV} must be an unsigned integer, got '{raw}'"
        ))
    })?;
    if let Some(s) = cli.command.seed_mut() {
        *s = seed;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Decompose(a) => commands::decompose(&a),
        Command::Report(a) => report::run(&a).map(|_| ()),
    }
}
