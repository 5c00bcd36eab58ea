use thiserror::Error;

/// Errors raised by the eigenvalue, subproblem and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigendecomposition did not converge (dimension {dim}, norm {norm:.3e})")]
    EigenConvergence { dim: usize, norm: f64 },

    #[error("eigenvalue derivative undefined (condition {condition:.3e})")]
    DerivativeUndefined { condition: f64 },

    #[error("subproblem failure: {0}")]
    Subproblem(String),

    #[error("degenerate point: top eigenvalue is not semi-simple")]
    DegeneratePoint,

    #[error("delay eigenvalue computation failed: {0}")]
    DelayEigen(String),

    #[error("discretization degree cap {cap} exceeded before the spectrum stabilized")]
    DelayAccuracy { cap: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown built-in problem `{0}`")]
    UnknownBuiltin(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("all {starts} starts failed; first error: {first}")]
    AllStartsFailed { starts: usize, first: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
