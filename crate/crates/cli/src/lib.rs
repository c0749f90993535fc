//! Command-line front end for the bonus-malus rating library: scenario
//! configuration, report writers, and the three subcommand implementations.
//!
//! Exit codes used by the `bms` binary: 0 success, 1 configuration error,
//! 2 numeric failure (non-convergence, unreachable level).

pub mod commands;
pub mod config;
pub mod report;

/// Errors split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration (exit 1).
    Config(String),
    /// The numeric machinery failed on valid input (exit 2).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<bms_core::Error> for CliError {
    fn from(err: bms_core::Error) -> Self {
        if err.is_numeric() {
            CliError::Numeric(err.to_string())
        } else {
            CliError::Config(err.to_string())
        }
    }
}
