use thiserror::Error;

/// Errors raised by the analysis and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    #[error("cap exceeded: {name} = {value} (limit {limit})")]
    CapExceeded {
        name: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("invalid datum: {0}")]
    InvalidDatum(String),

    #[error("datum has not been validated")]
    Unvalidated,

    #[error("the zero subspace is not admissible here")]
    ZeroSubspace,

    #[error("subspace is not critical: {0}")]
    NotCritical(String),

    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("non-positive value: {0}")]
    NonPositive(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid cover: {0}")]
    InvalidCover(String),

    #[error("invalid body: {0}")]
    InvalidBody(String),

    #[error("inconsistent characterizations: {0}")]
    Inconsistent(String),

    #[error("internal numerical failure: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
