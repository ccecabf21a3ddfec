use thiserror::Error;

/// Errors raised by the geometric, transcription and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Wrong vector length, out-of-range order, malformed input.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Input outside the domain of an operator (cut locus, antipodal points, m <= 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// Non-finite values produced while linearizing or evaluating.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An internal invariant did not hold (frame misalignment, membership drift).
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("conic solver failure: {0}")]
    Solver(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
