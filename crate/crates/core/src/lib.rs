//! Post-processing, augmentation and evaluation for endoscopic artefact
//! segmentation and detection predictions.
//!
//! The crate works on model outputs stored as files: per-class probability
//! maps ([`ProbMap`]), boolean masks ([`BinaryMask`]) and bounding boxes
//! ([`Detection`]). It provides
//!
//! - seeded augmentation including CutMix for segmentation ([`augment`]),
//! - segmentation losses with analytic gradients and Dice/IoU/F2/precision
//!   plus detection AP ([`metrics`]),
//! - pixel-wise ensembling and the triple-threshold false-positive filter
//!   ([`segpost`]),
//! - multi-model box fusion and its grid-search tuner ([`detfuse`]),
//! - the `EADT` tensor format, detection JSON and dataset splitting ([`io`]).

pub mod augment;
pub mod detection;
pub mod detfuse;
mod error;
pub mod io;
pub mod metrics;
pub mod segpost;
pub mod tensor;

pub use detection::{box_iou, Detection, DetectionSet};
pub use error::{Error, Result};
pub use tensor::{binarize, positive_area, BinaryMask, ImageTensor, ProbMap, Raster, Shape};
