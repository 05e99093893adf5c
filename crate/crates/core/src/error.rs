use thiserror::Error;

/// Errors raised by the recovery pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence not strictly increasing and positive at index {index}")]
    NonMonotoneSequence { index: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "ill-conditioned system: achieved residual {achieved} exceeds target {target}; \
         an estimated {required_bits} working bits would be needed"
    )]
    IllConditioned {
        achieved: String,
        target: String,
        required_bits: u32,
    },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: String },

    #[error("sample grid too sparse: spacing {spacing} exceeds limit {limit}")]
    SparseSamples { spacing: String, limit: String },

    #[error("method {method} not admissible here: {reason}")]
    RegimeMismatch { method: String, reason: String },

    #[error("sensor point failed verification: sin(k·x0/mu) vanishes at k = {k}")]
    SensorVerification { k: usize },

    #[error("sensor point verified only up to K = {verified}, but support {needed} is required")]
    VerificationRange { verified: usize, needed: usize },

    #[error("gap condition violated: {0}")]
    GapCondition(String),

    #[error("tensor scalar fixing impossible: {0}")]
    ScalarFixing(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
