//! Experiment runner for the low-rank Laplace–Gaussian filter.

pub mod config;
pub mod experiment;
pub mod fetch;
pub mod results;

use thiserror::Error;

/// Errors mapped to process exit codes: configuration problems exit with 1,
/// everything else with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Core(#[from] lrlgf_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}
