use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: Shape, actual: Shape },

    #[error("invalid shape {0}: every dimension must be at least 1")]
    EmptyShape(Shape),

    #[error("data length {actual} does not match shape {shape} ({expected} elements)")]
    DataLength {
        shape: Shape,
        expected: usize,
        actual: usize,
    },

    #[error("value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },

    #[error("invalid box in image `{image_id}`: {reason}")]
    InvalidBox { image_id: String, reason: String },

    #[error("class {class_id} out of range for {num_classes} classes")]
    ClassOutOfRange { class_id: usize, num_classes: usize },

    #[error("config has {config} classes but input has {input}")]
    ClassCountMismatch { config: usize, input: usize },

    #[error("split counts sum to {sum} but manifest has {len} ids")]
    CountMismatch { sum: usize, len: usize },

    #[error("duplicate image id `{0}`")]
    DuplicateId(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated data: expected {expected} bytes, found {actual}")]
    TruncatedData { expected: usize, actual: usize },

    #[error("{0} unexpected bytes after tensor payload")]
    TrailingBytes(usize),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("mask has no positive pixels")]
    NoPositivePixels,

    #[error("crop size {size} larger than image {width}x{height}")]
    CropLargerThanImage {
        size: usize,
        width: usize,
        height: usize,
    },

    #[error("batch of {0} samples is too small (need at least 2)")]
    BatchTooSmall(usize),

    #[error("stage {index} out of range (schedule has {len} stages)")]
    StageOutOfRange { index: usize, len: usize },

    #[error("ensemble has no members")]
    EmptyEnsemble,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("search grid is empty")]
    EmptyGrid,

    #[error("{weights} fusion weights for {models} models")]
    WeightCountMismatch { weights: usize, models: usize },

    #[error("detection sets for one image carry different ids: `{0}` and `{1}`")]
    MixedImageIds(String, String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised while reading or decoding a file, as opposed
    /// to violations of a value or shape invariant.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Json { .. }
                | Error::MalformedHeader(_)
                | Error::TruncatedData { .. }
                | Error::TrailingBytes(_)
                | Error::UnsupportedVersion(_)
        )
    }
}
