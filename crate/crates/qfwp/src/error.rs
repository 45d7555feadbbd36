//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (qubit counts, layer counts, hyperparameters).
    #[error("configuration error: {0}")]
    Config(String),
    /// Invalid argument to an operation (shape mismatch, index out of range).
    #[error("argument error: {0}")]
    Argument(String),
    /// Operation called in the wrong order or on exhausted state.
    #[error("state error: {0}")]
    State(String),
    /// Malformed serialized data.
    #[error("format error: {0}")]
    Format(String),
    /// Non-finite values where finite numbers are required.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
