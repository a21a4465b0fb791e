use thiserror::Error;

/// Errors surfaced by the certification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("resource limit exceeded: {what} (cap {cap})")]
    ResourceLimit { what: String, cap: usize },

    #[error("inconsistent partition: block {block}, types {first} and {second} disagree on block {target}")]
    InconsistentPartition {
        block: usize,
        target: usize,
        first: usize,
        second: usize,
    },

    #[error("LP solver failure: {0}")]
    Solver(String),

    #[error("malformed artifact: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
