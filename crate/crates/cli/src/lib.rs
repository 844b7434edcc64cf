//! Command-line front end for `randinf`.
//!
//! Every subcommand reads a JSON [`config::RunConfig`], optionally a CSV data
//! file, and writes a stamped JSON envelope or a plain CSV table.

use std::fmt;

pub mod commands;
pub mod config;
pub mod data;
pub mod output;
pub mod presets;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad configuration, flags or input data. Exit code 2.
    Validation(String),
    /// I/O failures, infeasible designs and numerical breakdowns. Exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<randinf::Error> for CliError {
    fn from(e: randinf::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}
