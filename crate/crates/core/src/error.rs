use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A malformed byte stream (image file or checkpoint).
    #[error("decode error at byte {offset}: {message}")]
    Decode { offset: usize, message: String },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing dataset: {0}")]
    MissingDataset(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn decode(offset: usize, message: impl Into<String>) -> Self {
        Error::Decode {
            offset,
            message: message.into(),
        }
    }

    /// Short machine-parsable class name, used by the CLI on failure.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidShape(_) => "invalid-shape",
            Error::UnsupportedGeometry(_) => "unsupported-geometry",
            Error::ContractViolation(_) => "contract-violation",
            Error::InvalidState(_) => "invalid-state",
            Error::Decode { .. } => "decode",
            Error::Degenerate(_) => "degenerate",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::Config(_) => "config",
            Error::MissingDataset(_) => "missing-dataset",
            Error::Io(_) => "io",
        }
    }
}
