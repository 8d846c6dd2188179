use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failures that abort a command. All of them map to exit code 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Schema {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Core(#[from] qdstrain_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn input(path: &Path, message: impl Into<String>) -> CliError {
        CliError::Input {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub(crate) fn schema(path: &Path, line: u64, message: impl Into<String>) -> CliError {
        CliError::Schema {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }
}
