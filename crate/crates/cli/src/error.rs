use std::process::ExitCode;

use thiserror::Error;

/// Failures mapped onto the exit-code contract.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed inputs, and failed writes.
    #[error("{0:#}")]
    Input(anyhow::Error),
    /// Bad configuration or spec values.
    #[error("{0:#}")]
    Config(anyhow::Error),
}

impl CliError {
    pub fn input(e: impl Into<anyhow::Error>) -> Self {
        Self::Input(e.into())
    }

    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        Self::Config(e.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Input(_) => ExitCode::from(1),
            Self::Config(_) => ExitCode::from(2),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
