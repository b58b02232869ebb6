//! Experiment harness behind the `mpfair` binary.

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, unreadable or malformed input data.
    #[error("input error: {0}")]
    Input(String),
    /// The sensitive kernel does not separate the groups.
    #[error("assumption violated: {0}")]
    Assumption(String),
    /// A checked invariant or identity failed.
    #[error("invariant failure: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invariant(_) => 1,
            CliError::Input(_) => 2,
            CliError::Assumption(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
