use thiserror::Error;

/// Errors raised by the simulator, the learners and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("state diverged at t = {time:.4} s (reduce the substep size)")]
    StateDiverged { time: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("environment stepped before reset")]
    NotReset,
    #[error("empty series: {0}")]
    Empty(&'static str),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("update failed: {0}")]
    UpdateFailed(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
