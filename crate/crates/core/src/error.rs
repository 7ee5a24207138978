use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("invalid oriented box: {0}")]
    InvalidBox(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid polyline: {0}")]
    InvalidPolyline(String),

    #[error("keypoint index {index} out of range for a polyline of {len} keypoints")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("keypoint {0} is not visible")]
    InvisibleKeypoint(usize),

    #[error("pseudo keypoint {0} has no visible neighbor")]
    NoVisibleNeighbor(usize),

    #[error("object scale must be finite and positive, got {0}")]
    InvalidScale(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("detections and ground truth span several images ({0} and {1})")]
    MixedImageIds(String, String),

    #[error("predictions reference unknown image ids: {}", .0.join(", "))]
    UnknownImages(Vec<String>),

    #[error("invalid center: {0}")]
    InvalidCenter(String),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("heatmap shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 3], [usize; 3]),

    /// A file failed validation; `path` is a JSON path such as `annotations[3].keypoints`.
    #[error("{file}: {path}: {message}")]
    Validation {
        file: String,
        path: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures reading or writing files, as opposed to bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
