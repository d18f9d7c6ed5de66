use thiserror::Error;

/// Errors raised by the filtering, smoothing and training routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A small inner system could not be solved, even after jitter.
    #[error("numerical failure in {context}: condition estimate {condition:.3e}")]
    Numerical { context: &'static str, condition: f64 },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Training { epoch: usize, step: usize, loss: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
