use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("weight layout mismatch: expected {expected}, found {found}")]
    Layout {
        expected: &'static str,
        found: &'static str,
    },

    #[error("malformed model manifest: {0}")]
    Manifest(String),

    #[error("blob size mismatch for {what}: need {needed} bytes, have {available}")]
    BlobSize {
        what: String,
        needed: usize,
        available: usize,
    },

    #[error("unsupported layer kind `{0}`")]
    UnsupportedLayer(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
