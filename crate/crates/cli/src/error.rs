use std::path::PathBuf;

use aga_core::dataset_io::DatasetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Dataset { path: PathBuf, source: DatasetError },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Core(#[from] aga_core::Error),
    #[error("{0}")]
    Mismatch(String),
    #[error("missing videos: {}", .0.join(", "))]
    Missing(Vec<String>),
}

impl CliError {
    /// Stable machine-readable class, printed as `error[<class>]`.
    pub fn class(&self) -> String {
        match self {
            CliError::Config { .. } => "config".into(),
            CliError::Io { .. } => "io".into(),
            CliError::Dataset { source, .. } => format!("dataset.{}", source.class()),
            CliError::Invalid(_) => "invalid".into(),
            CliError::Core(_) => "contract".into(),
            CliError::Mismatch(_) => "mismatch".into(),
            CliError::Missing(_) => "missing".into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Dataset { .. } => 4,
            CliError::Mismatch(_) | CliError::Missing(_) => 5,
            CliError::Core(_) => 6,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub(crate) fn dataset(path: impl Into<PathBuf>) -> impl FnOnce(DatasetError) -> CliError {
        let path = path.into();
        move |source| match source {
            DatasetError::Io(source) => CliError::Io { path, source },
            source => CliError::Dataset { path, source },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
