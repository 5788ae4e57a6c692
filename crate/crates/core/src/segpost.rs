//! Segmentation post-processing: pixel-wise ensembling, percentile-derived
//! minimum areas, triple thresholding and its grid-search tuner.
//!
//! Pipeline order is ensemble first, then one triple threshold on the
//! averaged map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, Aggregation, MetricWeights, PixelCounts};
use crate::tensor::{binarize, positive_area, BinaryMask, ProbMap, Raster};

pub const DEFAULT_SELECTION_THRESHOLD: f64 = 0.47;
pub const DEFAULT_AREA_PERCENTILE: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleThresholdConfig {
    pub max_prob_thresh: f64,
    pub min_prob_thresh: f64,
    pub min_area_thresh: Vec<u64>,
}

impl TripleThresholdConfig {
    pub fn new(
        max_prob_thresh: f64,
        min_prob_thresh: f64,
        min_area_thresh: Vec<u64>,
    ) -> Result<Self> {
        let cfg = Self {
            max_prob_thresh,
            min_prob_thresh,
            min_area_thresh,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.min_prob_thresh, self.max_prob_thresh);
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::param(
                "triple_threshold",
                format!("need 0 <= min_prob_thresh ({lo}) <= max_prob_thresh ({hi}) <= 1"),
            ));
        }
        if self.min_area_thresh.is_empty() {
            return Err(Error::param("triple_threshold", "min_area_thresh is empty"));
        }
        Ok(())
    }
}

/// Gates each class plane on its count of high-confidence pixels.
///
/// For class `i`: when fewer than `min_area_thresh[i]` pixels exceed
/// `max_prob_thresh`, the plane is cleared; otherwise it becomes
/// `p > min_prob_thresh`.
pub fn triple_threshold(p: &ProbMap, cfg: &TripleThresholdConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    if cfg.min_area_thresh.len() != p.num_classes() {
        return Err(Error::ClassCountMismatch {
            config: cfg.min_area_thresh.len(),
            input: p.num_classes(),
        });
    }
    let gate = binarize(p, cfg.max_prob_thresh)?;
    let kept = binarize(p, cfg.min_prob_thresh)?;
    let plane = p.shape().plane_len();
    let mut data = kept.into_vec();
    for (c, &area) in cfg.min_area_thresh.iter().enumerate() {
        if positive_area(&gate, c)? < area {
            data[c * plane..(c + 1) * plane].fill(false);
        }
    }
    BinaryMask::new(p.shape(), data)
}

/// Element-wise mean of equally shaped maps.
pub fn pixel_ensemble(maps: &[ProbMap]) -> Result<ProbMap> {
    let first = maps.first().ok_or(Error::EmptyEnsemble)?;
    let shape = first.shape();
    if let Some(bad) = maps.iter().find(|m| m.shape() != shape) {
        return Err(Error::ShapeMismatch {
            expected: shape,
            actual: bad.shape(),
        });
    }
    let n = maps.len() as f64;
    let mut acc = vec![0.0f64; shape.len()];
    for m in maps {
        acc.iter_mut()
            .zip(m.as_slice())
            .for_each(|(a, &v)| *a += v as f64);
    }
    let data = acc
        .into_iter()
        .map(|s| (s / n).clamp(0.0, 1.0) as f32)
        .collect();
    ProbMap::new(shape, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub id: String,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSelection {
    pub threshold: f64,
    pub members: Vec<EnsembleMember>,
}

/// Keeps candidates whose validation dice is strictly above `threshold`.
pub fn select_members(candidates: &[(String, f64)], threshold: f64) -> EnsembleSelection {
    EnsembleSelection {
        threshold,
        members: candidates
            .iter()
            .filter(|(_, d)| *d > threshold)
            .map(|(id, dice)| EnsembleMember {
                id: id.clone(),
                dice: *dice,
            })
            .collect(),
    }
}

/// Per-class minimum area: the nearest-rank `percentile` of the class's
/// positive-pixel counts over the images where it is present. Classes never
/// present get 0.
pub fn min_area_from_dataset(gt_masks: &[BinaryMask], percentile: f64) -> Result<Vec<u64>> {
    let first = gt_masks.first().ok_or(Error::EmptyDataset)?;
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::param(
            "percentile",
            format!("{percentile} is outside (0, 100)"),
        ));
    }
    let classes = first.num_classes();
    let mut areas: Vec<Vec<u64>> = vec![Vec::new(); classes];
    for m in gt_masks {
        if m.num_classes() != classes {
            return Err(Error::ClassCountMismatch {
                config: classes,
                input: m.num_classes(),
            });
        }
        for (c, bucket) in areas.iter_mut().enumerate() {
            let a = positive_area(m, c)?;
            if a > 0 {
                bucket.push(a);
            }
        }
    }
    Ok(areas
        .into_iter()
        .map(|mut bucket| {
            if bucket.is_empty() {
                return 0;
            }
            bucket.sort_unstable();
            let n = bucket.len();
            // percentile * n first keeps e.g. 2.5 * 40 / 100 exact
            let rank = ((percentile * n as f64) / 100.0).ceil() as usize;
            bucket[rank.clamp(1, n) - 1]
        })
        .collect())
}

/// What the threshold tuner maximises.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "metric")]
pub enum SegObjective {
    #[default]
    Precision,
    Dice,
    Iou,
    F2,
    Composite {
        #[serde(default)]
        weights: MetricWeights,
    },
}

impl SegObjective {
    pub fn score(
        &self,
        preds: &[BinaryMask],
        gts: &[BinaryMask],
        aggregation: Aggregation,
    ) -> Result<f64> {
        let weights = match self {
            SegObjective::Composite { weights } => *weights,
            _ => MetricWeights::default(),
        };
        let r = metrics::evaluate_segmentation(preds, gts, &weights, aggregation)?;
        Ok(match self {
            SegObjective::Precision => r.pixel_precision,
            SegObjective::Dice => r.mean.dice,
            SegObjective::Iou => r.mean.iou,
            SegObjective::F2 => r.mean.f2,
            SegObjective::Composite { .. } => r.composite,
        })
    }
}

/// Candidate values for the tuner. `None` in `max_values` means plain
/// binarisation at the min threshold, without the area gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegGrid {
    pub min_values: Vec<f64>,
    pub max_values: Vec<Option<f64>>,
}

impl Default for SegGrid {
    fn default() -> Self {
        Self {
            min_values: vec![0.4, 0.5],
            max_values: vec![None, Some(0.6), Some(0.7), Some(0.8)],
        }
    }
}

impl SegGrid {
    pub fn len(&self) -> usize {
        self.min_values.len() * self.max_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells in row order: min outer, max inner.
    pub fn cells(&self) -> Vec<(f64, Option<f64>)> {
        self.min_values
            .iter()
            .flat_map(|&lo| self.max_values.iter().map(move |&hi| (lo, hi)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegTuneRow {
    pub min_thresh: f64,
    pub max_thresh: Option<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegTuneResult {
    pub objective: SegObjective,
    pub best: SegTuneRow,
    /// `None` when the best cell is the ungated baseline.
    pub best_config: Option<TripleThresholdConfig>,
    pub table: Vec<SegTuneRow>,
}

/// Post-processes one map for a tuner cell.
pub fn apply_cell(
    p: &ProbMap,
    min_thresh: f64,
    max_thresh: Option<f64>,
    areas: &[u64],
) -> Result<BinaryMask> {
    match max_thresh {
        None => binarize(p, min_thresh),
        Some(hi) => triple_threshold(
            p,
            &TripleThresholdConfig::new(hi, min_thresh, areas.to_vec())?,
        ),
    }
}

// Ascending order of preference among equal scores.
fn tie_key(row: &SegTuneRow) -> (f64, bool, f64) {
    (
        row.min_thresh,
        row.max_thresh.is_none(),
        row.max_thresh.unwrap_or(0.0),
    )
}

/// Grid search over (min, max) thresholds with fixed per-class areas.
///
/// Every cell is scored; ties go to the lower min threshold, then the lower
/// max threshold, with the ungated cell last.
pub fn tune_triple_threshold(
    preds: &[ProbMap],
    gts: &[BinaryMask],
    grid: &SegGrid,
    areas: &[u64],
    objective: SegObjective,
    aggregation: Aggregation,
) -> Result<SegTuneResult> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if preds.len() != gts.len() {
        return Err(Error::param(
            "ground_truth",
            format!(
                "{} predictions but {} ground-truth masks",
                preds.len(),
                gts.len()
            ),
        ));
    }
    let table = grid
        .cells()
        .into_par_iter()
        .map(|(lo, hi)| {
            let masks = preds
                .iter()
                .map(|p| apply_cell(p, lo, hi, areas))
                .collect::<Result<Vec<_>>>()?;
            Ok(SegTuneRow {
                min_thresh: lo,
                max_thresh: hi,
                score: objective.score(&masks, gts, aggregation)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = table
        .iter()
        .min_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| tie_key(a).partial_cmp(&tie_key(b)).unwrap())
        })
        .cloned()
        .expect("non-empty grid");
    let best_config = best
        .max_thresh
        .map(|hi| TripleThresholdConfig::new(hi, best.min_thresh, areas.to_vec()))
        .transpose()?;
    Ok(SegTuneResult {
        objective,
        best,
        best_config,
        table,
    })
}

/// Pooled confusion counts of a post-processed dataset; handy for reports.
pub fn dataset_counts(preds: &[BinaryMask], gts: &[BinaryMask]) -> Result<PixelCounts> {
    let mut acc = PixelCounts::default();
    for (p, g) in preds.iter().zip(gts) {
        acc.add(metrics::pooled_counts(p, g)?);
    }
    Ok(acc)
}
