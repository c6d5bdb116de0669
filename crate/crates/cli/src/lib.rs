//! Experiment runner: training, rollouts, gait comparison, joint-count sweep
//! and aggregated reward curves. Every command writes plain CSV.

pub mod args;
pub mod commands;
pub mod config;
pub mod output;

pub use args::run;
pub use config::{AlgoKind, JointRange, RunConfig};

/// Failure classes, mapped to process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] snakelab_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> String {
        self.to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
