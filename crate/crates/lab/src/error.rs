use langevin_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("line {line}: key `{key}`: {message}")]
    Parse { line: usize, key: String, message: String },

    #[error("invalid config: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{failed} of {total} suite rows failed")]
    SuiteFailed { failed: usize, total: usize },
}

impl LabError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 validation, 3 numerical failure, 4 suite failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Parse { .. } | LabError::Invalid(_) => 2,
            LabError::Core(
                CoreError::InvalidParameter(_)
                | CoreError::DimensionMismatch { .. }
                | CoreError::Dataset(_)
                | CoreError::EmptyData
                | CoreError::MissingConstant(_),
            ) => 2,
            LabError::SuiteFailed { .. } => 4,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "validation",
            4 => "suite_failure",
            _ => "numerical_failure",
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
