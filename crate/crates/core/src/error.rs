use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,
    #[error("point lies outside the objective's domain")]
    OutOfDomain,
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
}
