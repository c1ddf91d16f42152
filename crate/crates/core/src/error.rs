use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// The variants follow the failure classes the CLI maps onto exit codes:
/// configuration problems, bad numerical data, solver failures and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("inconsistent corrector system: |1^T f| = {sum:.3e} exceeds {limit:.3e}")]
    InconsistentSystem { sum: f64, limit: f64 },

    #[error("shift too large: (A - sigma*B) is not positive definite for sigma = {sigma} ({detail})")]
    ShiftTooLarge { sigma: f64, detail: String },

    #[error("solver did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("alignment failure: {0}")]
    Alignment(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Process exit code used by the command line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Unsupported(_) | Error::DimensionMismatch { .. } => 2,
            Error::NotConverged { .. } | Error::ShiftTooLarge { .. } => 3,
            Error::Io(_) => 4,
            Error::Data(_) | Error::InconsistentSystem { .. } | Error::Alignment(_) => 3,
        }
    }
}
