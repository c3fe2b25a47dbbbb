//! Library side of the `qsl` command: config parsing, problem assembly and the
//! `simulate` / `echo` / `verify` commands.

pub mod config;
pub mod problem;
pub mod run;

use qsl_core::QslError;
use thiserror::Error;

pub use config::{parse_config, parse_config_bytes, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, arguments or problem definition.
    #[error("config error: {0}")]
    Config(String),
    /// The numerics could not proceed (degeneracy, failed residual check, ...).
    #[error("numerical error: {0}")]
    Numerical(QslError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(e: QslError) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<QslError> for CliError {
    fn from(e: QslError) -> Self {
        match e {
            QslError::Degeneracy { .. } | QslError::Numerical(_) | QslError::ReferenceSolution { .. } => {
                CliError::Numerical(e)
            }
            other => CliError::Config(other.to_string()),
        }
    }
}
