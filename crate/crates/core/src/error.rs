use std::io;

use thiserror::Error;

use crate::data::pnm::CodecError;
use crate::nn::checkpoint::CheckpointError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Shape(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("backward requires a scalar output, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("objective is not deterministic: {0}")]
    NonDeterministic(String),

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("{path}: {source}")]
    Codec { path: String, source: CodecError },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable, machine-readable category used by the command line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NonFinite { .. } => "non-finite",
            Error::NotScalar(_) => "not-scalar",
            Error::MissingGradient(_) => "missing-gradient",
            Error::NonDeterministic(_) => "non-deterministic",
            Error::Manifest { .. } => "manifest",
            Error::Checkpoint(e) => e.kind(),
            Error::Codec { source, .. } => source.kind(),
            Error::Io(_) => "io",
        }
    }
}
