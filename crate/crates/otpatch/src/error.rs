use std::path::PathBuf;

/// Errors from file handling and configuration data.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed VOL1 header in {path}: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("payload size mismatch in {path}: header dims need {expected} voxels, payload has {got}")]
    SizeMismatch { path: PathBuf, expected: usize, got: usize },
    #[error("non-finite voxel in {path} at index {index}")]
    NonFiniteVoxel { path: PathBuf, index: usize },
    #[error(transparent)]
    Core(#[from] otpatch_core::Error),
    #[error("invalid value for {field}: {reason}")]
    InvalidField { field: String, reason: String },
}

impl DataError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io { path: path.into(), source }
    }

    pub fn header(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        DataError::Header { path: path.into(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, DataError>;
