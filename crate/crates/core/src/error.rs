use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown dialogue act type `{0}`")]
    UnknownDaType(String),

    #[error("unknown slot `{0}`")]
    UnknownSlot(String),

    #[error("dialogue act has no items")]
    EmptyDa,

    #[error("morphological tag must have 15 positions, got {0}")]
    TagLength(usize),

    #[error("invalid character {ch:?} at tag position {position}")]
    TagAlphabet { position: usize, ch: char },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("no surface forms for {slot}={value}")]
    UnknownValue { slot: String, value: String },

    #[error("no value assigned to slot `{0}`")]
    MissingAssignment(String),

    #[error("placeholders without values in the dialogue act: {0:?}")]
    UnfilledPlaceholders(Vec<String>),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
