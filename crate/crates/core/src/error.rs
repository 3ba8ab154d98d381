use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode WAV file {path}: {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("unsupported sample format in {path}: {found}")]
    UnsupportedFormat { path: PathBuf, found: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected} samples, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("sample {value} at index {index} is outside [-1, 1]; normalize before writing PCM-16")]
    SampleOutOfRange { index: usize, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no common content detected")]
    NoCommonContent,

    #[error("spectrogram parameters do not match the inverse transform: {0}")]
    IncompatibleParams(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
