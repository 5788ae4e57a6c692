use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::detection::{box_iou, Detection, DetectionSet};
use crate::error::{Error, Result};

pub const DEFAULT_AP_IOU: f64 = 0.5;

/// Outcome of one ranked prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub image_id: String,
    /// Position of the box within its image's prediction list.
    pub pred_index: usize,
    pub confidence: f64,
    /// Matched ground-truth position within the image, `None` for a false positive.
    pub gt_index: Option<usize>,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: u32,
    pub ap: f64,
    pub num_gt: usize,
    pub num_pred: usize,
    /// In rank order.
    pub matches: Vec<MatchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub iou_thresh: f64,
    /// Classes with at least one ground-truth box, ascending.
    pub per_class: Vec<ClassAp>,
    pub map: f64,
}

/// Boxes of one class grouped by image, keeping first-seen image order and
/// each box's index within its image.
fn group(sets: &[DetectionSet], class_id: u32) -> Vec<(&str, Vec<(usize, &Detection)>)> {
    let mut order: Vec<(&str, Vec<(usize, &Detection)>)> = Vec::new();
    // image id -> (slot in `order`, boxes of every class seen so far)
    let mut seen: HashMap<&str, (usize, usize)> = HashMap::new();
    for set in sets {
        let (i, offset) = seen.entry(set.image_id.as_str()).or_insert_with(|| {
            order.push((set.image_id.as_str(), Vec::new()));
            (order.len() - 1, 0)
        });
        for (k, b) in set.boxes.iter().enumerate() {
            if b.class_id == class_id {
                order[*i].1.push((*offset + k, b));
            }
        }
        *offset += set.boxes.len();
    }
    order
}

fn check_iou(iou_thresh: f64) -> Result<()> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(Error::param(
            "iou_thresh",
            format!("{iou_thresh} is outside (0, 1]"),
        ));
    }
    Ok(())
}

/// Area under the precision envelope (all-point interpolation) for a ranked
/// list of hit flags.
fn envelope_area(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 || hits.is_empty() {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(hits.len());
    for (rank, &hit) in hits.iter().enumerate() {
        tp += hit as usize;
        points.push((tp as f64 / num_gt as f64, tp as f64 / (rank + 1) as f64));
    }
    for i in (0..points.len().saturating_sub(1)).rev() {
        points[i].1 = points[i].1.max(points[i + 1].1);
    }
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for (recall, precision) in points {
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

/// Average precision for one class.
///
/// Predictions are ranked by descending confidence (ties keep input order).
/// Each one is a true positive when an unmatched ground truth of the same
/// image and class overlaps it with IoU ≥ `iou_thresh`; it takes the
/// highest-IoU such box (lowest index on ties).
pub fn average_precision(
    preds: &[DetectionSet],
    gts: &[DetectionSet],
    class_id: u32,
    iou_thresh: f64,
) -> Result<ClassAp> {
    check_iou(iou_thresh)?;
    let gt_groups = group(gts, class_id);
    let num_gt = gt_groups.iter().map(|(_, b)| b.len()).sum();
    let gt_by_image: HashMap<&str, &Vec<(usize, &Detection)>> =
        gt_groups.iter().map(|(id, b)| (*id, b)).collect();

    let mut ranked: Vec<(&str, usize, &Detection)> = group(preds, class_id)
        .into_iter()
        .flat_map(|(id, boxes)| boxes.into_iter().map(move |(i, b)| (id, i, b)))
        .collect();
    ranked.sort_by(|a, b| b.2.confidence.total_cmp(&a.2.confidence));

    let mut taken: HashMap<&str, Vec<bool>> = HashMap::new();
    let mut matches = Vec::with_capacity(ranked.len());
    let mut hits = Vec::with_capacity(ranked.len());
    for (image_id, pred_index, det) in ranked {
        let mut best: Option<(usize, f64)> = None;
        if let Some(gt_boxes) = gt_by_image.get(image_id) {
            let used = taken
                .entry(image_id)
                .or_insert_with(|| vec![false; gt_boxes.len()]);
            for (slot, (_, g)) in gt_boxes.iter().enumerate() {
                if used[slot] {
                    continue;
                }
                let iou = box_iou(det, g);
                if iou >= iou_thresh && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((slot, iou));
                }
            }
            if let Some((slot, _)) = best {
                used[slot] = true;
            }
        }
        hits.push(best.is_some());
        matches.push(MatchRecord {
            image_id: image_id.to_string(),
            pred_index,
            confidence: det.confidence,
            gt_index: best.map(|(slot, _)| gt_by_image[image_id][slot].0),
            iou: best.map_or(0.0, |(_, iou)| iou),
        });
    }
    Ok(ClassAp {
        class_id,
        ap: envelope_area(&hits, num_gt),
        num_gt,
        num_pred: hits.len(),
        matches,
    })
}

/// Mean of per-class AP over classes that have at least one ground-truth
/// box. Zero when the ground truth is empty.
pub fn mean_ap(preds: &[DetectionSet], gts: &[DetectionSet], iou_thresh: f64) -> Result<ApResult> {
    check_iou(iou_thresh)?;
    let classes: BTreeSet<u32> = gts
        .iter()
        .flat_map(|s| s.boxes.iter().map(|b| b.class_id))
        .collect();
    let per_class = classes
        .into_iter()
        .map(|c| average_precision(preds, gts, c, iou_thresh))
        .collect::<Result<Vec<_>>>()?;
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|c| c.ap).sum::<f64>() / per_class.len() as f64
    };
    Ok(ApResult {
        iou_thresh,
        per_class,
        map,
    })
}
