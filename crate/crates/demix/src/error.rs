use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] demix_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        HarnessError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether the failure came from reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(self, HarnessError::Io { .. } | HarnessError::Format { .. } | HarnessError::Csv(_))
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
