use std::path::PathBuf;

use nds_core::protocol::ApiError;

/// Exit status of the `nds` binary, one per error class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Usage = 2,
    Network = 3,
    Server = 4,
    Io = 5,
    Data = 6,
    Version = 7,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot reach server at {url}: {message}\nhint: check that the server is running and --server/SERVER_URL is correct, then retry")]
    Network { url: String, message: String },
    #[error("server returned {status}: {error}{}", detail_suffix(.error))]
    Server { status: u16, error: ApiError },
    #[error("unexpected response from server ({status}): {message}")]
    BadResponse { status: u16, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("expert {index}: {message}")]
    Version { index: usize, message: String },
    #[error(transparent)]
    Core(#[from] nds_core::Error),
}

fn detail_suffix(error: &ApiError) -> String {
    if error.detail.is_null() {
        String::new()
    } else {
        format!(" (detail: {})", error.detail)
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::Usage,
            CliError::Network { .. } => ExitCode::Network,
            CliError::Server { .. } | CliError::BadResponse { .. } => ExitCode::Server,
            CliError::Io { .. } => ExitCode::Io,
            CliError::Version { .. } => ExitCode::Version,
            CliError::Core(nds_core::Error::Io { .. }) => ExitCode::Io,
            CliError::Core(nds_core::Error::VersionMismatch { .. }) => ExitCode::Version,
            CliError::Data(_) | CliError::Core(_) => ExitCode::Data,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
