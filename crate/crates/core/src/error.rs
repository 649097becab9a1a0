//! Error types shared across the library.

use crate::optim::RunRecord;
use thiserror::Error;

pub type CoreResult<T> = Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid mini-batch: {0}")]
    InvalidBatch(String),

    #[error("numeric overflow in {0}")]
    NumericOverflow(String),

    #[error("singular linear system")]
    SingularSystem,

    #[error("IDX format error in {origin}: {detail}")]
    IdxFormat { origin: String, detail: String },

    #[error("IDX payload truncated in {origin}: {detail}")]
    IdxTruncated { origin: String, detail: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid step-size grid: {0}")]
    StepGrid(String),

    #[error("exact enumeration supports at most {max} samples, problem has {n}")]
    EnumerationLimit { n: usize, max: usize },

    /// A training run produced a non-finite loss. The rows recorded before
    /// the abort are preserved on the error so callers can still write them.
    #[error("run diverged at iteration {iteration} (non-finite loss)")]
    Diverged {
        iteration: u64,
        record: Box<RunRecord>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
