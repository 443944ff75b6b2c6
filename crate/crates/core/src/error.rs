use std::io;

use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("PU and SU positions coincide")]
    CoincidentPositions,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("cold cache: SU {su} has no cached activation for sample {sample}")]
    ColdCache { su: usize, sample: usize },

    #[error("training diverged at round {round}: loss = {loss}")]
    Diverged { round: usize, loss: f64 },

    #[error("target accuracy {target} is unreachable: noise floor c/(2 mu v) = {floor}")]
    UnreachableTarget { target: f64, floor: f64 },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: {0}")]
    TruncatedPayload(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
