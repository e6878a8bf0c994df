use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ReqError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ReqError {
    /// An array or vector did not have the dimension a contract requires.
    #[error("shape mismatch in {context}: {dimension} expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        dimension: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("quaternion is not unit length (norm {norm})")]
    NonUnitQuaternion { norm: f64 },

    #[error("gain matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("episode already terminated; call reset first")]
    EpisodeTerminated,

    #[error("replay buffer holds {available} transitions, need {required}")]
    InsufficientData { available: usize, required: usize },

    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ReqError {
    pub(crate) fn shape(
        context: &'static str,
        dimension: &'static str,
        expected: usize,
        actual: usize,
    ) -> Self {
        ReqError::Shape {
            context,
            dimension,
            expected,
            actual,
        }
    }
}

/// Returns the index of the first non-finite entry, if any.
pub(crate) fn first_non_finite(values: &[f64]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

pub(crate) fn ensure_finite(context: &'static str, values: &[f64]) -> Result<()> {
    match first_non_finite(values) {
        Some(index) => Err(ReqError::NonFinite { context, index }),
        None => Ok(()),
    }
}
