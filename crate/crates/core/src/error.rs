use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SamcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SamcError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid keypoint set: {0}")]
    Keypoints(String),

    #[error("singular thin-plate-spline solve: {0}")]
    SingularSolve(String),

    #[error("invalid image size {0}: side must be a power of two")]
    ImageSize(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite {component} loss")]
    NonFinite { component: &'static str },

    #[error("zero-norm vector: cosine similarity is undefined")]
    ZeroNorm,

    #[error("{0}")]
    Metric(String),

    #[error("feature extractor not loaded: {0}")]
    ExtractorUnavailable(String),

    #[error("checkpoint architecture fingerprint mismatch: file has `{found}`, expected `{expected}`")]
    FingerprintMismatch { expected: String, found: String },

    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SamcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SamcError::Io {
            path: path.into(),
            source,
        }
    }
}
