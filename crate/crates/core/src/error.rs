use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments, malformed or inconsistent configuration.
    Config,
    /// Missing, corrupt or mismatched data files.
    Data,
    /// Numerical or I/O failure while running.
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("cosine similarity undefined for an all-zero operand")]
    ZeroVector,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: truncated payload, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset already carries injected label noise")]
    AlreadyNoisy,
    #[error("no noisy samples")]
    NoNoisySamples,
    #[error("unsupported {what} version {found}, expected {expected}")]
    VersionMismatch {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("checksum failure in {0}")]
    Checksum(String),
    #[error("dataset hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("{0}")]
    Empty(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::Json(_) => ErrorKind::Config,
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::CountMismatch { .. }
            | Error::LabelOutOfRange { .. }
            | Error::AlreadyNoisy
            | Error::NoNoisySamples
            | Error::VersionMismatch { .. }
            | Error::Checksum(_)
            | Error::HashMismatch { .. }
            | Error::Malformed { .. }
            | Error::Empty(_) => ErrorKind::Data,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ErrorKind::Data
            }
            Error::DimensionMismatch { .. }
            | Error::NonFinite(_)
            | Error::ZeroVector
            | Error::Diverged { .. }
            | Error::Io { .. } => ErrorKind::Runtime,
        }
    }
}
