use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum TalrError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("affinity value {value} is not a member of the level set {levels:?}")]
    UnknownLevel { value: u32, levels: Vec<u32> },

    #[error("metric undefined for this query: {0}")]
    UndefinedMetric(&'static str),

    #[error("cutoff k = {k} outside 1..={max}")]
    CutoffOutOfRange { k: usize, max: usize },

    #[error("permutation oracle guard exceeded: {count} orderings > {limit}")]
    CombinatorialGuard { count: u128, limit: u128 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated input at byte offset {offset}: expected {expected} more bytes")]
    Truncated { offset: usize, expected: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TalrError> = std::result::Result<T, E>;
