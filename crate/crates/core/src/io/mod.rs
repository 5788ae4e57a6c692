//! File formats and dataset splitting.
//!
//! Tensors use the binary [`eadt`] container. Detections, manifests, run
//! configs and reports are JSON; floats are written in shortest round-trip
//! form so reading them back restores the exact `f64`.

pub mod config;
pub mod eadt;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detection::DetectionSet;
use crate::error::{Error, Result};

pub use config::RunConfig;
pub use eadt::{read_tensor, write_tensor, TensorFile};

/// Current version tag for JSON documents carrying a `"version"` field.
pub const JSON_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Validation,
    Holdout,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Train, Subset::Validation, Subset::Holdout];

    pub fn name(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Validation => "validation",
            Subset::Holdout => "holdout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub subset: Subset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl SplitManifest {
    pub fn subset(&self, subset: Subset) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.subset == subset)
            .map(|e| e.image_id.as_str())
            .collect()
    }

    /// Manifest restricted to one subset, order kept.
    pub fn only(&self, subset: Subset) -> SplitManifest {
        SplitManifest {
            version: self.version,
            entries: self
                .entries
                .iter()
                .filter(|e| e.subset == subset)
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub holdout: usize,
}

impl SplitCounts {
    pub const fn new(train: usize, validation: usize, holdout: usize) -> Self {
        Self {
            train,
            validation,
            holdout,
        }
    }

    pub const fn total(&self) -> usize {
        self.train + self.validation + self.holdout
    }
}

/// Assigns ids to train, validation and holdout in release order.
pub fn split_sequential(ids: &[String], counts: SplitCounts) -> Result<SplitManifest> {
    if counts.total() != ids.len() {
        return Err(Error::CountMismatch {
            sum: counts.total(),
            len: ids.len(),
        });
    }
    let mut seen = HashSet::with_capacity(ids.len());
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::DuplicateId(dup.clone()));
    }
    let subsets = std::iter::repeat_n(Subset::Train, counts.train)
        .chain(std::iter::repeat_n(Subset::Validation, counts.validation))
        .chain(std::iter::repeat_n(Subset::Holdout, counts.holdout));
    Ok(SplitManifest {
        version: JSON_VERSION,
        entries: ids
            .iter()
            .zip(subsets)
            .map(|(id, subset)| ManifestEntry {
                image_id: id.clone(),
                subset,
            })
            .collect(),
    })
}

/// One id per line; surrounding whitespace and blank lines are ignored.
pub fn parse_id_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

/// Pretty JSON with a trailing newline; the byte form every writer uses.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory serialization cannot fail");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json_bytes(value)).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

pub fn write_detections(path: impl AsRef<Path>, sets: &[DetectionSet]) -> Result<()> {
    write_json(path, sets)
}

/// Reads a detection document and checks every box.
pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionSet>> {
    let sets: Vec<DetectionSet> = read_json(path)?;
    sets.iter().try_for_each(DetectionSet::validate)?;
    Ok(sets)
}

pub fn parse_detections(text: &str) -> Result<Vec<DetectionSet>> {
    let sets: Vec<DetectionSet> =
        serde_json::from_str(text).map_err(|e| Error::json("<memory>", e))?;
    sets.iter().try_for_each(DetectionSet::validate)?;
    Ok(sets)
}

pub fn write_manifest(path: impl AsRef<Path>, m: &SplitManifest) -> Result<()> {
    write_json(path, m)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<SplitManifest> {
    let path = path.as_ref();
    let m: SplitManifest = read_json(path)?;
    if m.version != JSON_VERSION {
        return Err(Error::UnsupportedVersion(m.version));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = m.entries.iter().find(|e| !seen.insert(e.image_id.as_str())) {
        return Err(Error::DuplicateId(dup.image_id.clone()));
    }
    Ok(m)
}
