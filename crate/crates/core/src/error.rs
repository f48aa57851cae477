use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("batch size error: {0}")]
    BatchSize(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("invalid label: {0}")]
    Label(String),
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("gene alignment error: {0}")]
    Alignment(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("report error: {0}")]
    Report(String),
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    /// Errors caused by bad input (files, flags, configuration) rather than
    /// by a failure during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::Parse { .. }
                | Error::Alignment(_)
                | Error::Config(_)
                | Error::Io { .. }
                | Error::Checkpoint(_)
                | Error::Label(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
