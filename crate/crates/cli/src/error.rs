use isocurv_core::Error;
use thiserror::Error;

/// Failures mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit 1.
    #[error("{0}")]
    PropertyFailure(String),
    /// Exit 2.
    #[error("solver failed: {0}")]
    Solver(String),
    /// Exit 3.
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::PropertyFailure(_) => 1,
            Self::Solver(_) => 2,
            Self::Input(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. }
            | Error::NonConvergence { .. }
            | Error::SvdNoConvergence { .. } => Self::Solver(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}
