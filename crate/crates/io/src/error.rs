use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}:{line}: {message}", path.display())]
    Malformed { path: PathBuf, line: u64, message: String },
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error("channel `{0}` is empty")]
    EmptyChannel(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] whisker_core::Error),
    #[error(transparent)]
    Sim(#[from] whisker_sim::SimError),
}

impl IoError {
    pub fn malformed(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Self::Malformed { path: path.into(), line, message: message.into() }
    }
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;
