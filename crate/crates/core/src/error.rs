use thiserror::Error;

/// Errors produced by the model, estimators, and environment constructors.
#[derive(Debug, Error)]
pub enum MnlError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state {state} has no reachable successor under action {action}")]
    EmptyReachableSet { state: usize, action: usize },

    #[error("observed successor {observed} is not reachable from state {state} under action {action}")]
    InvalidObservation {
        state: usize,
        action: usize,
        observed: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel is not embeddable: {0}")]
    InvalidKernel(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}
