use std::io;

use thiserror::Error;

/// Errors produced by the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument: shape mismatch, out-of-range parameter, empty input.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Operation invoked in a state that does not support it.
    #[error("invalid state: {0}")]
    State(String),

    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Non-finite value encountered during optimization or evaluation.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
