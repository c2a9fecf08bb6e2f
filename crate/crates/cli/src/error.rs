use std::path::PathBuf;

use thiserror::Error;
use wdpd_core::WdpdError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: file not found")]
    NotFound { path: PathBuf },
    #[error(transparent)]
    Core(#[from] WdpdError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// Process exit code: 2 for configuration problems, 3 for data and I/O
    /// problems, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NotFound { .. } => 3,
            CliError::Core(e) => match e {
                WdpdError::Config(_)
                | WdpdError::InvalidSpec(_)
                | WdpdError::InvalidOrder(_)
                | WdpdError::InvalidBand(_)
                | WdpdError::InfeasibleBudget { .. } => 2,
                WdpdError::Numeric(_) => 4,
                _ => 3,
            },
        }
    }
}
