use std::path::Path;

use farm_core::FarmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Numerical(#[from] FarmError),

    #[error("cannot encode report: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for usage errors and invalid parameters, 3 for numerical failures,
    /// 1 for I/O and input format problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Numerical(FarmError::InvalidParameter(_)) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } | CliError::Format(_) | CliError::Json(_) => 1,
        }
    }
}
