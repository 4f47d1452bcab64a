//! Library side of the `transport-bounds` command-line tool: file formats,
//! configuration and the three subcommands.

pub mod commands;
pub mod config;
pub mod io;

use thiserror::Error;
use transport_bounds::Error as CoreError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 0 ok, 1 usage, 2 data, 3 solver. Output failures count as data.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Separation { .. }
            | CoreError::NotConverged(_)
            | CoreError::Infeasible { .. }
            | CoreError::IterationLimit(_)
            | CoreError::TooManyBootstrapFailures { .. } => CliError::Solver(msg),
            CoreError::InvalidBasis(_)
            | CoreError::InvalidSensitivity(_)
            | CoreError::InvalidBootstrap(_)
            | CoreError::InvalidConfig(_) => CliError::Usage(msg),
            _ => CliError::Data(msg),
        }
    }
}
