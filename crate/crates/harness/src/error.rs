use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad flag, bad key, bad value or an unusable combination of settings.
    #[error("config error: {0}")]
    Config(String),

    #[error("dataset path does not exist: {}", .0.display())]
    MissingPath(PathBuf),

    #[error(transparent)]
    Library(#[from] gradguard::Error),

    #[error("{path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub(crate) fn output(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        HarnessError::Output {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::MissingPath(_) => 1,
            HarnessError::Library(gradguard::Error::InvalidArgument(_)) => 1,
            HarnessError::Library(_) | HarnessError::Output { .. } => 2,
        }
    }
}
