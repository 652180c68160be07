use std::io;

use thiserror::Error;

/// Errors surfaced by the codec library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("unsupported image: {0}")]
    UnsupportedImage(String),

    #[error("malformed image file: {0}")]
    MalformedImage(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("graph has not been evaluated; call forward() before backward()")]
    GraphNotEvaluated,

    #[error("corrupt stream: {0}")]
    Corrupt(String),

    #[error("encode diverged: {0}")]
    Divergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::Corrupt(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
