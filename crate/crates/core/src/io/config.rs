//! Run configuration: one JSON document that drives every tool invocation.
//!
//! Every section is optional and falls back to the documented defaults.
//! Relative paths are resolved against the directory holding the config
//! file and must exist when the config is loaded.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_json, JSON_VERSION};
use crate::augment::{CutScaling, StageSchedule, DEFAULT_CROP_SIZE, DEFAULT_PAD_MULTIPLE};
use crate::detfuse::{FusionConfig, FusionGrid, DEFAULT_IOU_THRESH, DEFAULT_SCORE_THRESH};
use crate::error::{Error, Result};
use crate::metrics::{Aggregation, MetricWeights, DEFAULT_AP_IOU};
use crate::segpost::{
    SegGrid, SegObjective, TripleThresholdConfig, DEFAULT_AREA_PERCENTILE,
    DEFAULT_SELECTION_THRESHOLD,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentOptions {
    pub crop_size: usize,
    pub pad_multiple: usize,
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    pub cutout_holes: usize,
    pub cutout_size: usize,
    pub cutmix_scaling: CutScaling,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            crop_size: DEFAULT_CROP_SIZE,
            pad_multiple: DEFAULT_PAD_MULTIPLE,
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            cutout_holes: 0,
            cutout_size: 0,
            cutmix_scaling: CutScaling::Scaled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationOptions {
    /// Absent until tuned or configured; tools that need it require it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triple_threshold: Option<TripleThresholdConfig>,
    pub grid: SegGrid,
    pub objective: SegObjective,
    pub area_percentile: f64,
    pub selection_threshold: f64,
    pub aggregation: Aggregation,
    pub metric_weights: MetricWeights,
    /// Threshold used when a float map is evaluated directly.
    pub eval_threshold: f64,
}

impl Default for SegmentationOptions {
    fn default() -> Self {
        Self {
            triple_threshold: None,
            grid: SegGrid::default(),
            objective: SegObjective::default(),
            area_percentile: DEFAULT_AREA_PERCENTILE,
            selection_threshold: DEFAULT_SELECTION_THRESHOLD,
            aggregation: Aggregation::Micro,
            metric_weights: MetricWeights::default(),
            eval_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionOptions {
    pub fusion: FusionConfig,
    pub grid: FusionGrid,
    pub ap_iou: f64,
    /// Applied to each model's boxes before fusion when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_score_thresh: Option<f64>,
}

impl Default for DetectionOptions {
    fn default() -> Self {
        Self {
            fusion: FusionConfig {
                iou_thresh: DEFAULT_IOU_THRESH,
                score_thresh: DEFAULT_SCORE_THRESH,
                weights: vec![1.0, 1.0, 1.0],
                mode: Default::default(),
                coords: Default::default(),
            },
            grid: FusionGrid::default(),
            ap_iou: DEFAULT_AP_IOU,
            model_score_thresh: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: DataPaths,
    #[serde(default)]
    pub schedule: StageSchedule,
    #[serde(default)]
    pub augment: AugmentOptions,
    #[serde(default)]
    pub segmentation: SegmentationOptions,
    #[serde(default)]
    pub detection: DetectionOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: JSON_VERSION,
            seed: 0,
            paths: DataPaths::default(),
            schedule: StageSchedule::default(),
            augment: AugmentOptions::default(),
            segmentation: SegmentationOptions::default(),
            detection: DetectionOptions::default(),
        }
    }
}

fn unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(name, format!("{v} is outside [0, 1]")));
    }
    Ok(())
}

impl RunConfig {
    /// Parses, resolves relative paths, checks they exist and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.predictions, &mut cfg.paths.ground_truth]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.exists() {
                return Err(Error::param(
                    "paths",
                    format!("{} does not exist", p.display()),
                ));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != JSON_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        self.schedule.validate()?;
        let a = &self.augment;
        if a.crop_size == 0 || a.pad_multiple == 0 {
            return Err(Error::param(
                "augment",
                "crop_size and pad_multiple must be at least 1",
            ));
        }
        unit("augment.hflip_prob", a.hflip_prob)?;
        unit("augment.vflip_prob", a.vflip_prob)?;

        let s = &self.segmentation;
        if let Some(tt) = &s.triple_threshold {
            tt.validate()?;
        }
        for &v in &s.grid.min_values {
            unit("segmentation.grid.min_values", v)?;
        }
        for v in s.grid.max_values.iter().flatten() {
            unit("segmentation.grid.max_values", *v)?;
        }
        if !(s.area_percentile > 0.0 && s.area_percentile < 100.0) {
            return Err(Error::param(
                "segmentation.area_percentile",
                "must lie in (0, 100)",
            ));
        }
        unit("segmentation.eval_threshold", s.eval_threshold)?;
        s.metric_weights.normalized()?;

        let d = &self.detection;
        d.fusion.validate()?;
        if !(d.ap_iou > 0.0 && d.ap_iou <= 1.0) {
            return Err(Error::param("detection.ap_iou", "must lie in (0, 1]"));
        }
        if let Some(t) = d.model_score_thresh {
            unit("detection.model_score_thresh", t)?;
        }
        for w in &d.grid.weight_sets {
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::param(
                    "detection.grid.weight_sets",
                    "weights must be positive",
                ));
            }
        }
        Ok(())
    }
}
