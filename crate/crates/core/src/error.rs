use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid network or agent specification.
    #[error("spec error: {0}")]
    Spec(String),

    /// Dimension or shape mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid configuration (unknown env, parameter, preset, method).
    #[error("config error: {0}")]
    Config(String),

    /// API misuse (stale tape, stepping a terminal state, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Empty or malformed data passed to a statistic.
    #[error("data error: {0}")]
    Data(String),

    /// Uncertainty method incompatible with the given model.
    #[error("method error: {0}")]
    Method(String),

    /// Training failure (divergence, non-finite gradients).
    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
