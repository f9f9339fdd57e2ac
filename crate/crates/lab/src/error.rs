use std::path::PathBuf;

/// Everything that can go wrong in the runner.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// Unreadable, malformed or invalid configuration. Maps to exit code 2.
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] snot_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    /// A file that parsed but does not describe a valid object.
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
}

impl LabError {
    pub fn config(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        LabError::Config { path: path.into(), message: message.into() }
    }

    pub fn format(what: &'static str, message: impl Into<String>) -> Self {
        LabError::Format { what, message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } | LabError::Core(snot_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
