//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation was called on state that is not ready for it
    /// (e.g. updating a memory that has not finished initialization).
    #[error("invalid state: {0}")]
    State(String),

    /// A computation could not produce a meaningful result
    /// (e.g. every finite-difference trial flipped an assignment).
    #[error("degenerate computation: {0}")]
    Degenerate(String),

    /// A structured input file failed to parse.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A binary file had a bad magic, header, or payload size.
    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
