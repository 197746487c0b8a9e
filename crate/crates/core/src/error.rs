use thiserror::Error;

/// Errors surfaced by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// The (Q, A) pair violates a structural invariant.
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    /// A caller-supplied argument is out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A dense factorization or iteration did not converge or produced garbage.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Floating point overflow (for example `exp(tA)` with huge `t * |A|`).
    #[error("range error: {0}")]
    Range(String),

    /// The Jordan structure could not be resolved with the available tolerances.
    #[error("ambiguous Jordan structure: {message}; candidate clusterings: {candidates:?}")]
    AmbiguousStructure {
        message: String,
        candidates: Vec<String>,
    },

    /// Quadrature was requested in a dimension above the configured cap.
    #[error("unsupported engine: {0}")]
    UnsupportedEngine(String),

    /// A user function returned a non-finite value.
    #[error("evaluation error at {point:?}: {message}")]
    Evaluation { point: Vec<f64>, message: String },

    /// Operator or candidate file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
