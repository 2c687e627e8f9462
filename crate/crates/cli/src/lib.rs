//! Config-driven experiment runner for the subspace transcription games.

pub mod config;
pub mod run;
pub mod svg;

use thiserror::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERIFICATION_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error(transparent)]
    Runtime(#[from] ctrl_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Missing(_) | CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}
