//! Batch front-end for the `hagedorn` library: configuration loading,
//! experiment orchestration and artifact writing.

pub mod config;
pub mod runs;

use std::fmt;

pub use config::{ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    /// A library error, with the run it happened in.
    Numerical { context: String, source: hagedorn::Error },
    /// Output could not be written.
    Output(String),
    /// The invariant suite reported failures.
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => EXIT_CONFIG,
            CliError::Numerical { .. } => EXIT_NUMERICAL,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }

    pub fn numerical(context: impl Into<String>, source: hagedorn::Error) -> Self {
        CliError::Numerical {
            context: context.into(),
            source,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Numerical { context, source } => write!(f, "numerical failure ({context}): {source}"),
            CliError::Output(m) => write!(f, "cannot write output: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}
