use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is not symmetric (entry ({row}, {col}) differs by {diff:e})")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("eigenvalue iteration did not converge after {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },
    #[error("posterior dispersion must be positive and finite, got {0}")]
    InvalidDispersion(f64),
    #[error("arm index {arm} out of range for {arms} arms")]
    InvalidArm { arm: usize, arms: usize },
    #[error("invalid dimensions: {0}")]
    InvalidDims(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("logistic fit did not converge (final gradient norm {gradient_norm:e})")]
    NonConvergence { gradient_norm: f64 },
}
