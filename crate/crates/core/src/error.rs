use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in {context} at x = {x}")]
    NonFinite { context: String, x: f64 },

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("integrand tail not closed: {0}")]
    TailNotClosed(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("divergence suspected: {0}")]
    DivergenceSuspected(String),

    #[error("regularization infeasible: {0}")]
    RegularizationInfeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
