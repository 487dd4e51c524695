use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("activation cache does not belong to this network (stale or foreign cache)")]
    StaleCache,

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("exact Fisher block of dimension {dim} exceeds the oracle guard (in*out <= {limit})")]
    SizeGuard { dim: usize, limit: usize },

    #[error("method state is not initialized: {0}")]
    Uninitialized(&'static str),

    #[error("re-scaling divisor {value} at index {index} is not positive; increase damping")]
    SingularRescaling { index: usize, value: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub(crate) fn dims(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
