use postratio::PreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::NonConvergence(_) => 3,
        }
    }

    /// Maps a library error, prefixing `context` (usually a file or flag).
    pub fn from_pre(context: &str, err: PreError) -> Self {
        let message = if context.is_empty() {
            err.to_string()
        } else {
            format!("{context}: {err}")
        };
        match err {
            PreError::SolverFailure(_) => CliError::NonConvergence(message),
            _ => CliError::Data(message),
        }
    }
}
