use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("family mismatch: expected {expected}, got {actual}")]
    FamilyMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("invalid value for `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("memory buffer is full (capacity {capacity})")]
    BufferFull { capacity: usize },

    #[error("batch id {0} is not present in the memory buffer")]
    UnknownBatch(u64),

    #[error("exhaustive selection over {len} entries exceeds the limit of {limit}")]
    ExhaustiveTooLarge { len: usize, limit: usize },

    #[error("idx: {0}")]
    Idx(#[from] crate::domains::IdxError),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}
