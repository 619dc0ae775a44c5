use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Inputs are inconsistent with each other or outside an operation's domain.
    #[error("usage error: {0}")]
    Usage(String),
    /// A computation would exceed a configured enumeration or cost cap.
    #[error("capacity exceeded: {what} needs {requested:.3e}, cap is {cap:.3e}")]
    Capacity {
        what: &'static str,
        requested: f64,
        cap: f64,
    },
    /// Observable text could not be parsed.
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
