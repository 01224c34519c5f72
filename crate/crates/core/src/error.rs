use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("item `{id}` has dimension {found}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },

    #[error("input has dimension {found}, expected {expected}")]
    InputDimension { expected: usize, found: usize },

    #[error("duplicate item id `{0}`")]
    DuplicateId(String),

    #[error("item `{id}`: {message}")]
    InvalidItem { id: String, message: String },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("need at least {needed} items, got {found}")]
    TooFewItems { needed: usize, found: usize },

    #[error("K = {k} exceeds the {available} clusterable units")]
    KTooLarge { k: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset has no labels")]
    MissingLabels,

    #[error("subset contains a single class")]
    SingleClass,

    #[error("item `{0}` is missing an image tensor")]
    MissingImage(String),

    #[error("image is not square: {height}x{width}")]
    NonSquareImage { height: usize, width: usize },

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("expert kind mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("expert {index}: {source}")]
    Expert {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported blob version {found} (this build reads version {supported})")]
    VersionMismatch { found: u16, supported: u16 },

    #[error("corrupt expert blob: {0}")]
    CorruptBlob(String),

    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite or out-of-range value at position {0}")]
    NonFinite(usize),

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("source is empty")]
    EmptySource,

    #[error("invalid budget: {0}")]
    InvalidBudget(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Stable kebab-case identifier, used as the `code` of API errors.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse-error",
            Error::DimensionMismatch { .. } | Error::InputDimension { .. } => "dimension-mismatch",
            Error::DuplicateId(_) => "duplicate-id",
            Error::InvalidItem { .. } | Error::InvalidManifest(_) => "invalid-manifest",
            Error::TooFewItems { .. } => "too-few-items",
            Error::KTooLarge { .. } => "k-too-large",
            Error::InvalidConfig(_) => "invalid-config",
            Error::MissingLabels => "missing-labels",
            Error::SingleClass => "single-class",
            Error::MissingImage(_) => "missing-image",
            Error::NonSquareImage { .. } => "non-square-image",
            Error::UnknownItem(_) => "unknown-item",
            Error::Divergence { .. } => "divergence",
            Error::KindMismatch { .. } => "kind-mismatch",
            Error::Expert { source, .. } => source.code(),
            Error::VersionMismatch { .. } => "version-mismatch",
            Error::CorruptBlob(_) => "corrupt-blob",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::NonFinite(_) => "non-finite-input",
            Error::NonPositiveTemperature(_) => "non-positive-temperature",
            Error::EmptySource => "empty-source",
            Error::InvalidBudget(_) => "invalid-budget",
        }
    }

    /// Wraps an error with the index of the expert that produced it.
    pub fn for_expert(self, index: usize) -> Self {
        Error::Expert {
            index,
            source: Box::new(self),
        }
    }
}
