use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    MalformedInput(String),

    /// `offset` is the byte position in the stream being parsed when the
    /// problem was detected.
    #[error("malformed bitstream at byte {offset}: {reason}")]
    MalformedBitstream { offset: usize, reason: String },

    #[error("malformed weights: {0}")]
    MalformedWeights(String),

    #[error("training diverged at step {step}: loss is {loss}")]
    TrainingDiverged { step: usize, loss: f64 },

    #[error("missing filter weights with hash {hash}")]
    MissingWeights { hash: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn bitstream(offset: usize, reason: impl Into<String>) -> Self {
        Error::MalformedBitstream {
            offset,
            reason: reason.into(),
        }
    }
}
