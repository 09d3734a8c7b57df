use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("conditioning on a set of zero mass")]
    DegenerateConditioning,

    #[error("capacity exceeded: {what} is {got}, limit {limit}")]
    CapacityExceeded {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    #[error("axiom violation: {0}")]
    AxiomViolation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
