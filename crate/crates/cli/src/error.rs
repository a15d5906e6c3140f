use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot {path}: {message}")]
    Snapshot { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] patchflow_core::Error),
    /// The run started but a step failed; partial outputs were written.
    #[error("run stopped at t = {t}: {source}")]
    Step {
        t: f64,
        #[source]
        source: patchflow_core::Error,
    },
    /// A suite ran to completion and some property failed.
    #[error("{0}")]
    Failed(String),
    /// Some sweep members failed; the remaining outputs were written.
    #[error("{0}")]
    Partial(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Step { .. } | Self::Partial(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
