use std::io;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("version mismatch: expected {expected}, found {found}")]
    Version { expected: u32, found: u32 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
