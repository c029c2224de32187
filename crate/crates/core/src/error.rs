//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller handed us something that violates an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// No parser provider is registered for the requested language tag.
    #[error("unsupported language: {0}")]
    UnsupportedLanguage(String),

    /// A byte offset fell outside the parsed span.
    #[error("offset {offset} outside parsed span 0..{len}")]
    OutOfRange { offset: usize, len: usize },

    /// A structured dump or file format failed to parse. `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A patch did not apply cleanly to the provided pre-image.
    #[error("unreconstructable: {0}")]
    Unreconstructable(String),

    /// The dataset cannot be used for the requested operation.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// Split ratios or the resulting partitions are unusable.
    #[error("invalid split: {0}")]
    InvalidSplit(String),

    /// Checkpoint and vocabulary (or other paired artifacts) do not match.
    #[error("incompatible artifact: {0}")]
    IncompatibleArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
