use std::path::PathBuf;

use slate_ope_core::Error as CoreError;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

/// Exit code for malformed input, unknown names and invalid settings.
pub const EXIT_INVALID_INPUT: u8 = 2;
/// Exit code when an estimator cannot be computed for lack of overlap.
pub const EXIT_OVERLAP: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Jsonl {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("estimator {name}: {source}")]
    Estimator {
        name: String,
        #[source]
        source: CoreError,
    },
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Io { .. } | AppError::Csv(_) => 1,
            AppError::Core(e) | AppError::Estimator { source: e, .. } if e.is_overlap_failure() => {
                EXIT_OVERLAP
            }
            _ => EXIT_INVALID_INPUT,
        }
    }
}
