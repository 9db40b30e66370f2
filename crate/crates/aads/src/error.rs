use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
///
/// The variants map onto the CLI exit codes: `InvalidArgument` and `Usage`
/// exit with 1, `Parse`/`Io` with 2, `Numerical` with 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid_argument(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Error::Usage(message.into())
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical(message.into())
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes the message with context (e.g. a pipeline stage and frame)
    /// without changing the error class.
    pub fn context(self, prefix: &str) -> Error {
        match self {
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("{prefix}: {m}")),
            Error::Usage(m) => Error::Usage(format!("{prefix}: {m}")),
            Error::Parse { path, message } => Error::Parse {
                path,
                message: format!("{prefix}: {message}"),
            },
            Error::Numerical(m) => Error::Numerical(format!("{prefix}: {m}")),
            Error::Io { path, source } => Error::Io {
                path,
                source: std::io::Error::new(source.kind(), format!("{prefix}: {source}")),
            },
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Usage(_) => 1,
            Error::Parse { .. } | Error::Io { .. } => 2,
            Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
