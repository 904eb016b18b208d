use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    /// Bad flags or configuration values.
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error(transparent)]
    Core(#[from] scsolve_core::Error),
    #[error("{0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        Self::Parse { path: path.to_path_buf(), line, msg: msg.into() }
    }

    /// 2 for usage errors, 3 for everything the data is to blame for.
    pub fn exit_code(&self) -> u8 {
        use scsolve_core::Error as E;
        match self {
            BenchError::Usage(_) => 2,
            BenchError::Core(E::InvalidParameter(_) | E::InvalidIndices(_)) => 2,
            _ => 3,
        }
    }
}
