//! Pixel metrics, differentiable segmentation losses and detection AP.
//!
//! Dataset-level segmentation metrics default to micro aggregation: pixel
//! counts are summed over all images before any ratio is taken, so the
//! reduction is associative and independent of image order. Macro
//! aggregation (per-image metrics, then the mean) is available through
//! [`Aggregation::Macro`].

mod ap;
mod loss;

pub use ap::{average_precision, mean_ap, ApResult, ClassAp, MatchRecord, DEFAULT_AP_IOU};
pub use loss::{
    bce_loss, combined_loss, soft_dice_loss, soft_jaccard_loss, LossValue, LossWeights, BCE_CLAMP,
    DICE_SMOOTH,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, Raster};

/// Confusion counts for one class plane (or a pool of planes).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl PixelCounts {
    pub fn add(&mut self, other: PixelCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    fn tally(pred: &[bool], gt: &[bool]) -> Self {
        let mut c = PixelCounts::default();
        for (&p, &g) in pred.iter().zip(gt) {
            match (p, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        c
    }

    /// `2|A∩B| / (|A|+|B|)`; 1 when both sets are empty.
    pub fn dice(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    /// `|A∩B| / |A∪B|`; 1 when both sets are empty.
    pub fn jaccard(&self) -> f64 {
        let denom = self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    /// F-beta with beta = 2, written on counts as `5TP / (5TP + 4FN + FP)`.
    /// 1 when prediction and ground truth are both empty, 0 when TP = 0
    /// otherwise.
    pub fn f2(&self) -> f64 {
        let denom = 5 * self.tp + 4 * self.fn_ + self.fp;
        if denom == 0 {
            1.0
        } else {
            (5 * self.tp) as f64 / denom as f64
        }
    }

    /// `TP / (TP + FP)`; 1 for an empty prediction.
    pub fn precision(&self) -> f64 {
        let denom = self.tp + self.fp;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    /// `TP / (TP + FN)`; 1 for an empty ground truth.
    pub fn recall(&self) -> f64 {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }
}

fn check_same(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            actual: b.shape(),
        });
    }
    Ok(())
}

/// Per-class confusion counts of `pred` against `gt`.
pub fn class_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<Vec<PixelCounts>> {
    check_same(pred, gt)?;
    Ok((0..pred.num_classes())
        .map(|c| PixelCounts::tally(pred.plane(c), gt.plane(c)))
        .collect())
}

/// Counts pooled over every class plane.
pub fn pooled_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<PixelCounts> {
    check_same(pred, gt)?;
    Ok(PixelCounts::tally(pred.as_slice(), gt.as_slice()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub per_class: Vec<f64>,
    pub mean: f64,
}

impl ClassScores {
    fn from_iter(values: impl Iterator<Item = f64>) -> Self {
        let per_class: Vec<f64> = values.collect();
        let mean = per_class.iter().sum::<f64>() / per_class.len() as f64;
        Self { per_class, mean }
    }
}

pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<ClassScores> {
    Ok(ClassScores::from_iter(
        class_counts(a, b)?.iter().map(PixelCounts::dice),
    ))
}

pub fn jaccard(a: &BinaryMask, b: &BinaryMask) -> Result<ClassScores> {
    Ok(ClassScores::from_iter(
        class_counts(a, b)?.iter().map(PixelCounts::jaccard),
    ))
}

/// Pixel F2 over all planes. Argument order matters.
pub fn f2_pixel(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(pooled_counts(pred, gt)?.f2())
}

/// Pixel precision over all planes. Argument order matters.
pub fn pixel_precision(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    Ok(pooled_counts(pred, gt)?.precision())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub dice: f64,
    pub iou: f64,
    pub f2: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            dice: 1.0 / 3.0,
            iou: 1.0 / 3.0,
            f2: 1.0 / 3.0,
        }
    }
}

impl MetricWeights {
    /// Weights scaled to sum to one.
    pub fn normalized(&self) -> Result<Self> {
        let ws = [self.dice, self.iou, self.f2];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param(
                "metric_weights",
                "weights must be finite and non-negative",
            ));
        }
        let sum: f64 = ws.iter().sum();
        if sum <= 0.0 {
            return Err(Error::param(
                "metric_weights",
                "at least one weight must be positive",
            ));
        }
        Ok(Self {
            dice: self.dice / sum,
            iou: self.iou / sum,
            f2: self.f2 / sum,
        })
    }
}

/// Weighted combination of dice, IoU and F2; weights are normalised first.
pub fn composite_seg_score(dice: f64, iou: f64, f2: f64, weights: &MetricWeights) -> Result<f64> {
    let w = weights.normalized()?;
    Ok(w.dice * dice + w.iou * iou + w.f2 * f2)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Sum pixel counts over the dataset, then take ratios.
    #[default]
    Micro,
    /// Per-image ratios, then the mean over images.
    Macro,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub dice: f64,
    pub iou: f64,
    pub f2: f64,
    pub precision: f64,
}

impl ClassMetrics {
    fn from_counts(c: &PixelCounts) -> Self {
        Self {
            dice: c.dice(),
            iou: c.jaccard(),
            f2: c.f2(),
            precision: c.precision(),
        }
    }

    fn scaled_sum<'a>(items: impl Iterator<Item = &'a ClassMetrics>, n: f64) -> Self {
        let mut acc = ClassMetrics::default();
        for m in items {
            acc.dice += m.dice;
            acc.iou += m.iou;
            acc.f2 += m.f2;
            acc.precision += m.precision;
        }
        ClassMetrics {
            dice: acc.dice / n,
            iou: acc.iou / n,
            f2: acc.f2 / n,
            precision: acc.precision / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub aggregation: Aggregation,
    pub num_images: usize,
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean of `per_class`.
    pub mean: ClassMetrics,
    /// Precision with every class plane pooled.
    pub pixel_precision: f64,
    pub composite: f64,
    pub weights: MetricWeights,
}

/// Dataset-level segmentation report for aligned prediction/ground-truth lists.
pub fn evaluate_segmentation(
    preds: &[BinaryMask],
    gts: &[BinaryMask],
    weights: &MetricWeights,
    aggregation: Aggregation,
) -> Result<MetricReport> {
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
    let num_classes = gts[0].num_classes();
    let mut per_image = Vec::with_capacity(preds.len());
    for (p, g) in preds.iter().zip(gts) {
        if g.num_classes() != num_classes {
            return Err(Error::ClassCountMismatch {
                config: num_classes,
                input: g.num_classes(),
            });
        }
        per_image.push((class_counts(p, g)?, pooled_counts(p, g)?));
    }

    let (per_class, pixel_precision) = match aggregation {
        Aggregation::Micro => {
            let mut classes = vec![PixelCounts::default(); num_classes];
            let mut pooled = PixelCounts::default();
            for (cc, pc) in &per_image {
                classes.iter_mut().zip(cc).for_each(|(a, b)| a.add(*b));
                pooled.add(*pc);
            }
            (
                classes
                    .iter()
                    .map(ClassMetrics::from_counts)
                    .collect::<Vec<_>>(),
                pooled.precision(),
            )
        }
        Aggregation::Macro => {
            let n = per_image.len() as f64;
            let per_class = (0..num_classes)
                .map(|c| {
                    let ms: Vec<_> = per_image
                        .iter()
                        .map(|(cc, _)| ClassMetrics::from_counts(&cc[c]))
                        .collect();
                    ClassMetrics::scaled_sum(ms.iter(), n)
                })
                .collect();
            let precision = per_image.iter().map(|(_, pc)| pc.precision()).sum::<f64>() / n;
            (per_class, precision)
        }
    };
    let mean = ClassMetrics::scaled_sum(per_class.iter(), num_classes as f64);
    let composite = composite_seg_score(mean.dice, mean.iou, mean.f2, weights)?;
    Ok(MetricReport {
        aggregation,
        num_images: preds.len(),
        per_class,
        mean,
        pixel_precision,
        composite,
        weights: *weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use proptest::prelude::*;

    fn row(bits: &[u8]) -> BinaryMask {
        BinaryMask::new(
            Shape::new(1, 1, bits.len()),
            bits.iter().map(|&b| b == 1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = row(&[1, 1, 0, 0]);
        assert_eq!(dice(&a, &a).unwrap().mean, 1.0);
        assert_eq!(dice(&a, &row(&[0, 0, 1, 1])).unwrap().mean, 0.0);
        assert_eq!(dice(&a, &row(&[0, 1, 1, 0])).unwrap().mean, 0.5);
        let empty = row(&[0, 0, 0, 0]);
        assert_eq!(dice(&empty, &empty).unwrap().mean, 1.0);
        assert!(matches!(
            dice(&a, &row(&[1])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn jaccard_examples() {
        let a = row(&[1, 1, 0]);
        assert_eq!(jaccard(&a, &a).unwrap().mean, 1.0);
        assert_eq!(jaccard(&a, &row(&[0, 0, 1])).unwrap().mean, 0.0);
        assert_eq!(jaccard(&a, &row(&[0, 1, 1])).unwrap().mean, 1.0 / 3.0);
    }

    #[test]
    fn f2_examples() {
        let gt = row(&[1, 1, 0, 0]);
        assert_eq!(f2_pixel(&gt, &gt).unwrap(), 1.0);
        // P = 1, R = 0.5
        assert_eq!(f2_pixel(&row(&[1, 0, 0, 0]), &gt).unwrap(), 5.0 / 9.0);
        assert_eq!(f2_pixel(&row(&[0, 0, 0, 0]), &gt).unwrap(), 0.0);
    }

    #[test]
    fn precision_examples() {
        let gt = row(&[1, 1, 1, 0, 0]);
        assert_eq!(pixel_precision(&gt, &gt).unwrap(), 1.0);
        assert_eq!(pixel_precision(&row(&[0, 0, 0, 0, 0]), &gt).unwrap(), 1.0);
        assert_eq!(pixel_precision(&row(&[1, 1, 1, 1, 0]), &gt).unwrap(), 0.75);
    }

    #[test]
    fn f2_and_precision_are_asymmetric() {
        let a = row(&[1, 0, 0, 0]);
        let b = row(&[1, 1, 0, 0]);
        assert_ne!(f2_pixel(&a, &b).unwrap(), f2_pixel(&b, &a).unwrap());
        assert_ne!(
            pixel_precision(&a, &b).unwrap(),
            pixel_precision(&b, &a).unwrap()
        );
    }

    #[test]
    fn composite_examples() {
        let eq = MetricWeights::default();
        assert!((composite_seg_score(0.6, 0.5, 0.7, &eq).unwrap() - 0.6).abs() < 1e-15);
        let dice_only = MetricWeights {
            dice: 1.0,
            iou: 0.0,
            f2: 0.0,
        };
        assert_eq!(composite_seg_score(0.6, 0.5, 0.7, &dice_only).unwrap(), 0.6);
        let skew = MetricWeights {
            dice: 2.0,
            iou: 5.0,
            f2: 1.0,
        };
        assert!((composite_seg_score(0.42, 0.42, 0.42, &skew).unwrap() - 0.42).abs() < 1e-15);
        let zero = MetricWeights {
            dice: 0.0,
            iou: 0.0,
            f2: 0.0,
        };
        assert!(composite_seg_score(0.5, 0.5, 0.5, &zero).is_err());
    }

    #[test]
    fn micro_and_macro_differ() {
        let gts = vec![row(&[1, 1, 1, 1]), row(&[1, 0, 0, 0])];
        let preds = vec![row(&[1, 1, 1, 1]), row(&[0, 1, 0, 0])];
        let w = MetricWeights::default();
        let micro = evaluate_segmentation(&preds, &gts, &w, Aggregation::Micro).unwrap();
        let macro_ = evaluate_segmentation(&preds, &gts, &w, Aggregation::Macro).unwrap();
        // micro: tp 4, fp 1, fn 1
        assert_eq!(micro.mean.dice, 8.0 / 10.0);
        assert_eq!(macro_.mean.dice, 0.5);
        assert_eq!(micro.pixel_precision, 0.8);
        assert_eq!(macro_.pixel_precision, 0.5);
        assert!(evaluate_segmentation(&[], &[], &w, Aggregation::Micro).is_err());
    }

    fn mask_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1usize..4, 1usize..8, 1usize..8).prop_flat_map(|(c, h, w)| {
            let n = c * h * w;
            (
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(a, b)| {
                    let s = Shape::new(c, h, w);
                    (
                        BinaryMask::new(s, a).unwrap(),
                        BinaryMask::new(s, b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn dice_jaccard_identity((a, b) in mask_pair()) {
            let d = dice(&a, &b).unwrap();
            let j = jaccard(&a, &b).unwrap();
            for (dv, jv) in d.per_class.iter().zip(&j.per_class) {
                prop_assert!((dv - 2.0 * jv / (1.0 + jv)).abs() <= 4.0 * f64::EPSILON);
            }
        }

        #[test]
        fn metrics_bounded_and_symmetric((a, b) in mask_pair()) {
            prop_assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
            prop_assert_eq!(jaccard(&a, &b).unwrap(), jaccard(&b, &a).unwrap());
            for v in [f2_pixel(&a, &b).unwrap(), pixel_precision(&a, &b).unwrap(),
                      dice(&a, &b).unwrap().mean, jaccard(&a, &b).unwrap().mean] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
