use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("dataset `{id}` is not ready (status {status})")]
    NotReady { id: String, status: &'static str },

    #[error("dataset `{id}` is already registered with checksum {existing}")]
    ChecksumConflict {
        id: String,
        existing: String,
        found: String,
    },

    #[error("dataset `{id}` is quarantined: {reason}")]
    Quarantined { id: String, reason: String },

    #[error("dataset `{id}` has no expert {index}")]
    UnknownExpert { id: String, index: usize },

    #[error("invalid dataset id `{0}`: use letters, digits, `.`, `_` or `-`")]
    InvalidId(String),

    #[error("only source manifests can be registered")]
    NotSource,

    #[error("no datasets requested")]
    NoDatasets,

    #[error("build of `{id}` failed: {message}")]
    BuildFailed { id: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt store entry `{id}`: {message}")]
    Corrupt { id: String, message: String },

    #[error(transparent)]
    Core(#[from] nds_core::Error),
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            StoreError::UnknownDataset(_) => "unknown-dataset",
            StoreError::NotReady { .. } => "not-ready",
            StoreError::ChecksumConflict { .. } => "duplicate-name-different-checksum",
            StoreError::Quarantined { .. } => "quarantined",
            StoreError::UnknownExpert { .. } => "unknown-expert",
            StoreError::InvalidId(_) => "invalid-dataset-id",
            StoreError::NotSource => "invalid-manifest",
            StoreError::NoDatasets => "unknown-dataset",
            StoreError::BuildFailed { .. } => "build-failed",
            StoreError::Io { .. } => "io",
            StoreError::Corrupt { .. } => "corrupt-store",
            StoreError::Core(e) => e.code(),
        }
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;
