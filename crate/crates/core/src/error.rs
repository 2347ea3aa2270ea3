use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate evidence on the {side} side: every likelihood underflows, so the evidence estimate is zero")]
    DegenerateEvidence { side: &'static str },

    #[error("black-box returned {value}, expected a probability in [0, 1]")]
    InvalidBlackbox { value: f64 },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("information matrix is numerically singular (condition number {condition:.3e}); add a ridge or reduce the feature set")]
    SingularInformation { condition: f64 },

    #[error("moment constraint infeasible: target lies at distance >= {gap:.6e} from the feature hull, radius is {radius:.6e}")]
    Infeasible { gap: f64, radius: f64 },

    #[error("row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PreError {
    fn from(err: std::io::Error) -> Self {
        PreError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PreError>;
