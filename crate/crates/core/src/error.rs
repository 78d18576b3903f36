use thiserror::Error;

/// Errors raised by network construction, solvers and the training harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("depth mismatch in parallel stack: {0:?} (pad with identity chains first)")]
    DepthMismatch(Vec<usize>),

    #[error("non-finite value at step {step}")]
    BlowUp { step: usize },

    #[error("initial data exceeds C0: sup|u0| = {sup} > C0 = {c0}")]
    BoundViolated { sup: f64, c0: f64 },

    #[error("grids are incommensurate: {0} vs {1} cells")]
    Incommensurate(usize, usize),

    #[error("(B4) check failed: {0}")]
    B4Failed(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, history: Vec<f64> },

    #[error("network too large: {0}")]
    TooLarge(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
