use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("corpus {path}: {malformed} of {total} rows malformed (first at row {first_row}: {first_msg})")]
    Corpus {
        path: PathBuf,
        malformed: usize,
        total: usize,
        first_row: usize,
        first_msg: String,
    },
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("harness: {0}")]
    Harness(String),
    #[error(transparent)]
    Core(#[from] natadv_core::Error),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    pub fn checkpoint(path: impl AsRef<Path>, msg: impl Into<String>) -> Self {
        Error::Checkpoint {
            path: path.as_ref().to_path_buf(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 2 for bad input, 3 for the remote service, 4 for
    /// everything that should not happen.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Format { .. }
            | Error::Usage(_)
            | Error::Corpus { .. }
            | Error::Checkpoint { .. } => 2,
            Error::Transport(_) | Error::Protocol(_) | Error::Harness(_) => 3,
            Error::Core(natadv_core::Error::Contract(_)) => 2,
            Error::Core(_) => 4,
        }
    }
}
