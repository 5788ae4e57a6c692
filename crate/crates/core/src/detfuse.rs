//! Multi-model detection fusion and its grid-search tuner.
//!
//! Boxes from several models are score-filtered, weighted per model, then
//! greedily clustered by class and IoU. Each cluster becomes one box whose
//! corners are the confidence-weighted mean of its members and whose
//! confidence is the sum of member confidences, capped at 1.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{box_iou, Detection, DetectionSet};
use crate::error::{Error, Result};
use crate::metrics::mean_ap;

pub const DEFAULT_SCORE_THRESH: f64 = 0.5;
pub const DEFAULT_IOU_THRESH: f64 = 0.5;

/// How a cluster is collapsed into its output box.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Average member corners and add member confidences.
    #[default]
    Average,
    /// Keep only the most confident member (classic suppression).
    Suppress,
}

/// Weighting of member corners in [`FusionMode::Average`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordWeighting {
    /// By weighted member confidence.
    #[default]
    Confidence,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub iou_thresh: f64,
    pub score_thresh: f64,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub mode: FusionMode,
    #[serde(default)]
    pub coords: CoordWeighting,
}

impl FusionConfig {
    pub fn new(iou_thresh: f64, score_thresh: f64, weights: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            iou_thresh,
            score_thresh,
            weights,
            mode: FusionMode::default(),
            coords: CoordWeighting::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iou_thresh > 0.0 && self.iou_thresh < 1.0) {
            return Err(Error::param(
                "iou_thresh",
                format!("{} is outside (0, 1)", self.iou_thresh),
            ));
        }
        if !(0.0..=1.0).contains(&self.score_thresh) {
            return Err(Error::param(
                "score_thresh",
                format!("{} is outside [0, 1]", self.score_thresh),
            ));
        }
        if self.weights.is_empty() || self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::param(
                "weights",
                "need at least one positive, finite weight",
            ));
        }
        Ok(())
    }
}

/// Keeps boxes with `confidence >= score_thresh`, in order.
pub fn filter_by_score(d: &DetectionSet, score_thresh: f64) -> DetectionSet {
    DetectionSet::new(
        d.image_id.clone(),
        d.boxes
            .iter()
            .filter(|b| b.confidence >= score_thresh)
            .copied()
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub model: usize,
    /// Index in the model's input list.
    pub box_index: usize,
    pub original: Detection,
    pub weighted_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedCluster {
    pub class_id: u32,
    pub members: Vec<ClusterMember>,
    pub fused: Detection,
}

impl FusedCluster {
    fn seed(m: ClusterMember, cfg: &FusionConfig) -> Self {
        let mut c = Self {
            class_id: m.original.class_id,
            fused: m.original,
            members: vec![m],
        };
        c.refresh(cfg);
        c
    }

    fn refresh(&mut self, cfg: &FusionConfig) {
        let total: f64 = self.members.iter().map(|m| m.weighted_confidence).sum();
        self.fused = match cfg.mode {
            FusionMode::Suppress => {
                let top = &self.members[0];
                top.original
                    .with_confidence(top.weighted_confidence.min(1.0))
            }
            // `c·x / c` is not always exactly `x`
            FusionMode::Average if self.members.len() == 1 => {
                self.members[0].original.with_confidence(total.min(1.0))
            }
            FusionMode::Average => {
                let uniform = cfg.coords == CoordWeighting::Uniform || total <= 0.0;
                let weight = |m: &ClusterMember| if uniform { 1.0 } else { m.weighted_confidence };
                let denom: f64 = self.members.iter().map(weight).sum();
                let mean = |f: fn(&Detection) -> f64| {
                    self.members
                        .iter()
                        .map(|m| weight(m) * f(&m.original))
                        .sum::<f64>()
                        / denom
                };
                Detection {
                    class_id: self.class_id,
                    x1: mean(|d| d.x1),
                    y1: mean(|d| d.y1),
                    x2: mean(|d| d.x2),
                    y2: mean(|d| d.y2),
                    confidence: total.min(1.0),
                }
            }
        };
    }
}

/// Fuses the per-model predictions for one image and returns the clusters,
/// ordered by fused confidence (descending, ties in creation order).
pub fn fuse_clusters(per_model: &[DetectionSet], cfg: &FusionConfig) -> Result<Vec<FusedCluster>> {
    cfg.validate()?;
    if per_model.len() != cfg.weights.len() {
        return Err(Error::WeightCountMismatch {
            weights: cfg.weights.len(),
            models: per_model.len(),
        });
    }
    if let Some(first) = per_model.first() {
        if let Some(other) = per_model.iter().find(|s| s.image_id != first.image_id) {
            return Err(Error::MixedImageIds(
                first.image_id.clone(),
                other.image_id.clone(),
            ));
        }
    }

    let mut pool: Vec<ClusterMember> = per_model
        .iter()
        .zip(&cfg.weights)
        .enumerate()
        .flat_map(|(model, (set, &w))| {
            set.boxes
                .iter()
                .enumerate()
                .filter(|(_, b)| b.confidence >= cfg.score_thresh)
                .map(move |(box_index, b)| ClusterMember {
                    model,
                    box_index,
                    original: *b,
                    weighted_confidence: b.confidence * w,
                })
        })
        .collect();
    // stable: ties stay in (model, input) order
    pool.sort_by(|a, b| b.weighted_confidence.total_cmp(&a.weighted_confidence));

    let mut clusters: Vec<FusedCluster> = Vec::new();
    for member in pool {
        let target = clusters.iter().position(|c| {
            c.class_id == member.original.class_id
                && box_iou(&c.fused, &member.original) > cfg.iou_thresh
        });
        match target {
            Some(i) => {
                clusters[i].members.push(member);
                clusters[i].refresh(cfg);
            }
            None => clusters.push(FusedCluster::seed(member, cfg)),
        }
    }
    clusters.sort_by(|a, b| b.fused.confidence.total_cmp(&a.fused.confidence));
    Ok(clusters)
}

/// Fused detections for one image.
pub fn fuse_detections(per_model: &[DetectionSet], cfg: &FusionConfig) -> Result<DetectionSet> {
    let clusters = fuse_clusters(per_model, cfg)?;
    let image_id = per_model
        .first()
        .map(|s| s.image_id.clone())
        .unwrap_or_default();
    Ok(DetectionSet::new(
        image_id,
        clusters.into_iter().map(|c| c.fused).collect(),
    ))
}

/// Groups per-model prediction lists by image.
///
/// Images are ordered as in `reference` (typically the ground truth), then
/// any remaining images in first-seen order. A model with no entry for an
/// image contributes an empty set.
pub fn align_images(
    per_model: &[Vec<DetectionSet>],
    reference: &[DetectionSet],
) -> Vec<(String, Vec<DetectionSet>)> {
    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut note = |id: &str| {
        if !index.contains_key(id) {
            index.insert(id.to_string(), order.len());
            order.push(id.to_string());
        }
    };
    reference.iter().for_each(|s| note(&s.image_id));
    per_model.iter().flatten().for_each(|s| note(&s.image_id));

    let mut grid: Vec<Vec<DetectionSet>> = order
        .iter()
        .map(|id| {
            per_model
                .iter()
                .map(|_| DetectionSet::empty(id.clone()))
                .collect()
        })
        .collect();
    for (m, sets) in per_model.iter().enumerate() {
        for s in sets {
            grid[index[&s.image_id]][m]
                .boxes
                .extend_from_slice(&s.boxes);
        }
    }
    order.into_iter().zip(grid).collect()
}

/// Fuses every image of a dataset.
pub fn fuse_dataset(
    per_model: &[Vec<DetectionSet>],
    cfg: &FusionConfig,
) -> Result<Vec<DetectionSet>> {
    align_images(per_model, &[])
        .iter()
        .map(|(_, sets)| fuse_detections(sets, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionGrid {
    pub iou_values: Vec<f64>,
    pub score_values: Vec<f64>,
    pub weight_sets: Vec<Vec<f64>>,
}

impl Default for FusionGrid {
    fn default() -> Self {
        Self {
            iou_values: vec![0.4, 0.5, 0.6],
            score_values: vec![0.4, 0.5, 0.6],
            weight_sets: vec![
                vec![1.0, 1.0, 1.0],
                vec![1.0, 1.0, 2.0],
                vec![1.0, 2.0, 1.0],
                vec![2.0, 1.0, 1.0],
                vec![1.0, 2.0, 2.0],
                vec![2.0, 1.0, 2.0],
                vec![2.0, 2.0, 1.0],
            ],
        }
    }
}

impl FusionGrid {
    pub fn len(&self) -> usize {
        self.iou_values.len() * self.score_values.len() * self.weight_sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(iou, score, weight-set index)` in row order.
    pub fn cells(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.len());
        for &iou in &self.iou_values {
            for &score in &self.score_values {
                for w in 0..self.weight_sets.len() {
                    out.push((iou, score, w));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionTuneRow {
    pub iou_thresh: f64,
    pub score_thresh: f64,
    pub weights: Vec<f64>,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionTuneResult {
    pub best: FusionTuneRow,
    pub best_config: FusionConfig,
    pub table: Vec<FusionTuneRow>,
}

/// Exhaustive search over the fusion grid, scored by mAP at `ap_iou`.
///
/// `per_model[m]` holds model `m`'s predictions over the dataset. Mode and
/// coordinate weighting come from `base`. Ties go to the lower IoU, then the
/// lower score threshold, then the earlier weight set.
pub fn tune_fusion(
    per_model: &[Vec<DetectionSet>],
    gts: &[DetectionSet],
    grid: &FusionGrid,
    base: &FusionConfig,
    ap_iou: f64,
) -> Result<FusionTuneResult> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if per_model.is_empty() {
        return Err(Error::param("models", "need at least one model"));
    }
    let images = align_images(per_model, gts);
    let cells = grid.cells();
    let table = cells
        .par_iter()
        .map(|&(iou, score, w)| {
            let cfg = FusionConfig {
                iou_thresh: iou,
                score_thresh: score,
                weights: grid.weight_sets[w].clone(),
                ..base.clone()
            };
            let fused = images
                .iter()
                .map(|(_, sets)| fuse_detections(sets, &cfg))
                .collect::<Result<Vec<_>>>()?;
            Ok(FusionTuneRow {
                iou_thresh: iou,
                score_thresh: score,
                weights: cfg.weights,
                map: mean_ap(&fused, gts, ap_iou)?.map,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best_index = (0..table.len())
        .min_by(|&a, &b| {
            table[b].map.total_cmp(&table[a].map).then_with(|| {
                let key = |i: usize| (cells[i].0, cells[i].1, cells[i].2 as f64);
                key(a).partial_cmp(&key(b)).unwrap()
            })
        })
        .expect("non-empty grid");
    let best = table[best_index].clone();
    let best_config = FusionConfig {
        iou_thresh: best.iou_thresh,
        score_thresh: best.score_thresh,
        weights: best.weights.clone(),
        ..base.clone()
    };
    Ok(FusionTuneResult {
        best,
        best_config,
        table,
    })
}
