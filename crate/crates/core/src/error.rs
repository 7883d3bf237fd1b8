use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("values do not fit any supported bit depth (1-4 bits): {0}")]
    UnsupportedBitDepth(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("I/O error on {path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    Magic { expected: Vec<u8>, found: Vec<u8> },

    #[error("unsupported {what} version {found} (supported: {supported})")]
    Version {
        what: &'static str,
        found: u32,
        supported: u32,
    },

    #[error("truncated {what}: needed {needed} bytes, found {found}")]
    Truncated {
        what: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("training diverged at step {step} (learning rate {learning_rate}): loss = {loss}")]
    Diverged {
        step: u64,
        learning_rate: f64,
        loss: f64,
    },

    #[error("no usable source sequences: {0}")]
    NoUsableSources(String),

    /// A tile plan failed to cover the output; this is a bug in the planner.
    #[error("tile plan violation: {0}")]
    Plan(String),

    #[error("image decoding failed for {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoAt {
            path: path.into(),
            source,
        }
    }

    /// Whether the error came from the filesystem rather than from the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::IoAt { .. })
    }
}
