use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("system has no coefficients")]
    EmptySystem,

    #[error("dimension mismatch at step {step}: expected {expected}x{expected}, got {rows}x{cols}")]
    DimensionMismatch {
        step: usize,
        expected: usize,
        rows: usize,
        cols: usize,
    },

    #[error("non-finite entry at step {step}, position ({row}, {col})")]
    NonFinite { step: usize, row: usize, col: usize },

    #[error("pair (m={m}, n={n}) is not admissible: need n <= m")]
    NotAdmissible { m: usize, n: usize },

    #[error("step {step} is beyond the horizon {horizon}")]
    BeyondHorizon { step: usize, horizon: usize },

    #[error("vector length {got} does not match system dimension {expected}")]
    VectorLength { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("rate sequence invalid: {0}")]
    InvalidRate(String),

    #[error("rate sequence undefined at step {step} (table has {len} entries)")]
    RateUndefined { step: usize, len: usize },

    #[error("invalid projection family: {0}")]
    InvalidFamily(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("coupled systems inconsistent: {0}")]
    Inconsistent(String),

    #[error("theorem conclusion violated: {0}")]
    TheoremViolation(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
