//! Independent oracles and synthetic data shared by the integration and
//! acceptance tests. Everything here is written from the definitions, not
//! from the library code paths it is compared against.

#![allow(dead_code)]

use eadkit::augment::RandomSource;
use eadkit::{BinaryMask, Detection, DetectionSet, ImageTensor, ProbMap, Raster, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_prob_map(r: &mut ChaCha8Rng, shape: Shape) -> ProbMap {
    ProbMap::new(shape, (0..shape.len()).map(|_| r.random::<f32>()).collect()).unwrap()
}

pub fn random_image(r: &mut ChaCha8Rng, shape: Shape) -> ImageTensor {
    ImageTensor::new(shape, (0..shape.len()).map(|_| r.random::<f32>()).collect()).unwrap()
}

pub fn random_mask(r: &mut ChaCha8Rng, shape: Shape, density: f64) -> BinaryMask {
    BinaryMask::new(
        shape,
        (0..shape.len()).map(|_| r.random_bool(density)).collect(),
    )
    .unwrap()
}

// ---------------------------------------------------------------- segpost

/// Step-by-step rendering of the triple-threshold procedure for one sample.
pub fn triple_threshold_oracle(
    output_masks: &ProbMap,
    max_prob: f64,
    min_prob: f64,
    min_area: &[u64],
) -> BinaryMask {
    let s = output_masks.shape();
    let mut final_masks: Vec<Vec<bool>> = Vec::new();
    let mut i = 0;
    for c in 0..s.channels {
        let output_mask: Vec<f64> = output_masks.plane(c).iter().map(|&v| v as f64).collect();
        let max_mask: Vec<bool> = output_mask.iter().map(|&v| v > max_prob).collect();
        let sum = max_mask.iter().filter(|&&b| b).count() as u64;
        let out = if sum < min_area[i] {
            vec![false; output_mask.len()]
        } else {
            output_mask.iter().map(|&v| v > min_prob).collect()
        };
        i += 1;
        final_masks.push(out);
    }
    BinaryMask::new(s, final_masks.concat()).unwrap()
}

/// Two-class dataset: class 0 has a large blob at 0.95 that matches the
/// ground truth exactly; class 1 is a true 8×8 blob at 0.95 on the first
/// image and a pure false-positive 3×3 blob at 0.55 on every other image.
pub fn fp_blob_dataset(images: usize) -> (Vec<ProbMap>, Vec<BinaryMask>) {
    let shape = Shape::new(2, 32, 32);
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for k in 0..images {
        let ox = 2 + k % 5;
        let in_big = |y: usize, x: usize| (ox..ox + 12).contains(&x) && (4..16).contains(&y);
        let in_small_tp =
            |y: usize, x: usize| k == 0 && (20..28).contains(&x) && (20..28).contains(&y);
        let in_fp = |y: usize, x: usize| k != 0 && (24..27).contains(&x) && (22..25).contains(&y);
        let mut data = vec![0.1f32; shape.len()];
        for y in 0..32 {
            for x in 0..32 {
                if in_big(y, x) {
                    data[shape.index(0, y, x)] = 0.95;
                }
                if in_small_tp(y, x) {
                    data[shape.index(1, y, x)] = 0.95;
                }
                if in_fp(y, x) {
                    data[shape.index(1, y, x)] = 0.55;
                }
            }
        }
        preds.push(ProbMap::new(shape, data).unwrap());
        gts.push(
            BinaryMask::from_fn(shape, |c, y, x| {
                if c == 0 {
                    in_big(y, x)
                } else {
                    in_small_tp(y, x)
                }
            })
            .unwrap(),
        );
    }
    (preds, gts)
}

/// Smallest present area `v` such that at least `percentile` percent of the
/// present areas are `<= v`.
pub fn nearest_rank_oracle(gts: &[BinaryMask], percentile: f64) -> Vec<u64> {
    let classes = gts[0].num_classes();
    (0..classes)
        .map(|c| {
            let mut areas: Vec<u64> = gts
                .iter()
                .map(|m| m.plane(c).iter().filter(|&&b| b).count() as u64)
                .filter(|&a| a > 0)
                .collect();
            areas.sort();
            let n = areas.len() as f64;
            areas
                .iter()
                .copied()
                .find(|&v| {
                    100.0 * areas.iter().filter(|&&a| a <= v).count() as f64 >= percentile * n
                })
                .unwrap_or(0)
        })
        .collect()
}

// ---------------------------------------------------------------- augment

fn round_half_away(v: f64) -> f64 {
    let f = v.floor();
    if v - f >= 0.5 {
        f + 1.0
    } else {
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutMixTrace {
    pub shuffled: Vec<usize>,
    pub lambda: f64,
    pub rect: (usize, usize, usize, usize),
    pub output: Vec<(ImageTensor, BinaryMask)>,
}

/// Hand trace of the CutMix procedure, replaying the seeded draws in the
/// documented order. The cut is `W·sqrt(1-λ)` wide and `H·sqrt(1-λ)` tall;
/// the bottom edge is clipped at `H` from above.
pub fn cutmix_oracle(batch: &[(ImageTensor, BinaryMask)], seed: u64) -> CutMixTrace {
    let mut rs = RandomSource::new(seed);
    let n = batch.len();
    let mut shuffled: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rs.below(i + 1);
        shuffled.swap(i, j);
    }
    let s = batch[0].0.shape();
    let (w, h) = (s.width as f64, s.height as f64);
    let lambda = rs.uniform();
    let r_x = rs.uniform() * w;
    let r_y = rs.uniform() * h;
    let r_w = (1.0 - lambda).sqrt() * w;
    let r_h = (1.0 - lambda).sqrt() * h;
    let x1 = round_half_away((r_x - r_w / 2.0).max(0.0)) as usize;
    let x2 = round_half_away((r_x + r_w / 2.0).min(w)) as usize;
    let y1 = round_half_away((r_y - r_h / 2.0).max(0.0)) as usize;
    let y2 = round_half_away((r_y + r_h / 2.0).min(h)) as usize;

    let inside = |y: usize, x: usize| x1 <= x && x < x2 && y1 <= y && y < y2;
    let output = (0..n)
        .map(|i| {
            let (img, mask) = &batch[i];
            let (img_s, mask_s) = &batch[shuffled[i]];
            let si = img.shape();
            let sm = mask.shape();
            let mut id = Vec::with_capacity(si.len());
            for c in 0..si.channels {
                for y in 0..si.height {
                    for x in 0..si.width {
                        id.push(if inside(y, x) {
                            img_s.get(c, y, x)
                        } else {
                            img.get(c, y, x)
                        });
                    }
                }
            }
            let mut md = Vec::with_capacity(sm.len());
            for c in 0..sm.channels {
                for y in 0..sm.height {
                    for x in 0..sm.width {
                        md.push(if inside(y, x) {
                            mask_s.get(c, y, x)
                        } else {
                            mask.get(c, y, x)
                        });
                    }
                }
            }
            (
                ImageTensor::new(si, id).unwrap(),
                BinaryMask::new(sm, md).unwrap(),
            )
        })
        .collect();
    CutMixTrace {
        shuffled,
        lambda,
        rect: (x1, y1, x2, y2),
        output,
    }
}

/// Batch whose pixels identify their own origin. Image channel 0 holds the
/// sample index, channel 1 the pixel position; mask plane `k` is set
/// everywhere on sample `k` and nowhere else.
pub fn provenance_batch(n: usize, h: usize, w: usize) -> Vec<(ImageTensor, BinaryMask)> {
    (0..n)
        .map(|k| {
            let s = Shape::new(2, h, w);
            let mut data = vec![0f32; s.len()];
            for y in 0..h {
                for x in 0..w {
                    data[s.index(0, y, x)] = (k + 1) as f32 / (n + 1) as f32;
                    data[s.index(1, y, x)] = (y * w + x) as f32 / (h * w) as f32;
                }
            }
            let img = ImageTensor::new(s, data).unwrap();
            let mask = BinaryMask::from_fn(Shape::new(n, h, w), |c, _, _| c == k).unwrap();
            (img, mask)
        })
        .collect()
}

/// Checks every pixel of a CutMix output over [`provenance_batch`] input.
/// Returns the set of sources used per sample, or a description of the
/// first violation.
pub fn check_provenance(
    input: &[(ImageTensor, BinaryMask)],
    output: &[(ImageTensor, BinaryMask)],
    shuffled: &[usize],
) -> Result<(), String> {
    let n = input.len();
    for (i, (img, mask)) in output.iter().enumerate() {
        let s = img.shape();
        for y in 0..s.height {
            for x in 0..s.width {
                if img.get(1, y, x) != input[i].0.get(1, y, x) {
                    return Err(format!("sample {i} pixel ({y},{x}) moved"));
                }
                let from_img = (0..n).find(|&k| input[k].0.get(0, y, x) == img.get(0, y, x));
                let mask_sources: Vec<usize> = (0..n).filter(|&k| mask.get(k, y, x)).collect();
                let Some(src) = from_img else {
                    return Err(format!("sample {i} pixel ({y},{x}) has no source"));
                };
                if src != i && src != shuffled[i] {
                    return Err(format!(
                        "sample {i} pixel ({y},{x}) came from unrelated sample {src}"
                    ));
                }
                if mask_sources != [src] {
                    return Err(format!(
                        "sample {i} pixel ({y},{x}): image from {src}, mask from {mask_sources:?}"
                    ));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- losses

/// Largest relative error between `analytic` and central differences of `f`.
/// Entries where both are below `1e-12` are skipped.
pub fn finite_difference_error(
    f: impl Fn(&[f64]) -> f64,
    p: &[f64],
    analytic: &[f64],
    h: f64,
) -> f64 {
    let mut x = p.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        x[i] = p[i] + h;
        let up = f(&x);
        x[i] = p[i] - h;
        let down = f(&x);
        x[i] = p[i];
        let numeric = (up - down) / (2.0 * h);
        let scale = numeric.abs().max(analytic[i].abs());
        if scale < 1e-12 {
            continue;
        }
        worst = worst.max((numeric - analytic[i]).abs() / scale);
    }
    worst
}

/// Probabilities drawn from `[0.05, 0.95]`, away from the BCE clamp.
pub fn interior_probs(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(0.05..0.95)).collect()
}

// ---------------------------------------------------------------- metrics

/// `(tp, fp, fn)` of one class plane by direct pixel loop.
pub fn counts_oracle(pred: &BinaryMask, gt: &BinaryMask, class: usize) -> (u64, u64, u64) {
    let s = pred.shape();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for y in 0..s.height {
        for x in 0..s.width {
            match (pred.get(class, y, x), gt.get(class, y, x)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    (tp, fp, fn_)
}

fn boxes_of(sets: &[DetectionSet], class_id: u32) -> Vec<(String, Detection)> {
    sets.iter()
        .flat_map(|s| {
            s.boxes
                .iter()
                .filter(|b| b.class_id == class_id)
                .map(move |b| (s.image_id.clone(), *b))
        })
        .collect()
}

fn area(b: &Detection) -> f64 {
    (b.x2 - b.x1) * (b.y2 - b.y1)
}

pub fn iou_oracle(a: &Detection, b: &Detection) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    inter / (area(a) + area(b) - inter)
}

// Per-rank key: matched beats unmatched, then higher IoU, then lower GT index.
type Key = (bool, f64, i64);

fn better(a: &[Key], b: &[Key]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x.0 != y.0 {
            return x.0;
        }
        if x.1 != y.1 {
            return x.1 > y.1;
        }
        if x.2 != y.2 {
            return x.2 > y.2;
        }
    }
    false
}

fn enumerate(
    rank: usize,
    preds: &[(String, Detection)],
    gts: &[(String, Detection)],
    thr: f64,
    used: &mut Vec<bool>,
    keys: &mut Vec<Key>,
    hits: &mut Vec<bool>,
    best: &mut Option<(Vec<Key>, Vec<bool>)>,
) {
    if rank == preds.len() {
        if best.as_ref().is_none_or(|(k, _)| better(keys, k)) {
            *best = Some((keys.clone(), hits.clone()));
        }
        return;
    }
    let (img, p) = &preds[rank];
    for (g, (gimg, gt)) in gts.iter().enumerate() {
        let iou = iou_oracle(p, gt);
        if used[g] || gimg != img || iou < thr {
            continue;
        }
        used[g] = true;
        keys.push((true, iou, -(g as i64)));
        hits.push(true);
        enumerate(rank + 1, preds, gts, thr, used, keys, hits, best);
        hits.pop();
        keys.pop();
        used[g] = false;
    }
    keys.push((false, 0.0, 0));
    hits.push(false);
    enumerate(rank + 1, preds, gts, thr, used, keys, hits, best);
    hits.pop();
    keys.pop();
}

/// AP of one class by exhaustive search over match assignments (the greedy
/// rank-order assignment is the lexicographically best one) and a direct
/// precision-envelope sum. `None` when the class has no ground truth.
pub fn ap_oracle(
    preds: &[DetectionSet],
    gts: &[DetectionSet],
    class_id: u32,
    thr: f64,
) -> Option<f64> {
    let gt_boxes = boxes_of(gts, class_id);
    if gt_boxes.is_empty() {
        return None;
    }
    let mut ranked = boxes_of(preds, class_id);
    ranked.sort_by(|a, b| b.1.confidence.partial_cmp(&a.1.confidence).unwrap());
    let mut best = None;
    enumerate(
        0,
        &ranked,
        &gt_boxes,
        thr,
        &mut vec![false; gt_boxes.len()],
        &mut Vec::new(),
        &mut Vec::new(),
        &mut best,
    );
    let hits = best.map(|(_, h)| h).unwrap_or_default();
    let precision: Vec<f64> = (0..hits.len())
        .map(|k| hits[..=k].iter().filter(|&&h| h).count() as f64 / (k + 1) as f64)
        .collect();
    let g = gt_boxes.len() as f64;
    Some(
        (0..hits.len())
            .filter(|&k| hits[k])
            .map(|k| precision[k..].iter().cloned().fold(0.0, f64::max) / g)
            .sum(),
    )
}

/// Mean of [`ap_oracle`] over classes with ground truth; 0 without any.
pub fn map_oracle(preds: &[DetectionSet], gts: &[DetectionSet], thr: f64) -> f64 {
    let mut classes: Vec<u32> = gts
        .iter()
        .flat_map(|s| s.boxes.iter().map(|b| b.class_id))
        .collect();
    classes.sort();
    classes.dedup();
    if classes.is_empty() {
        return 0.0;
    }
    classes
        .iter()
        .map(|&c| ap_oracle(preds, gts, c, thr).unwrap())
        .sum::<f64>()
        / classes.len() as f64
}

pub fn bx(class_id: u32, x1: f64, y1: f64, x2: f64, y2: f64, confidence: f64) -> Detection {
    Detection::new(class_id, x1, y1, x2, y2, confidence).unwrap()
}

/// Boxes on a coarse integer grid so that overlaps and exact ties are common.
pub fn random_box(r: &mut ChaCha8Rng, classes: u32) -> Detection {
    let x1 = r.random_range(0..8) as f64;
    let y1 = r.random_range(0..8) as f64;
    let w = r.random_range(1..5) as f64;
    let h = r.random_range(1..5) as f64;
    let conf = r.random_range(1..=10) as f64 / 10.0;
    bx(r.random_range(0..classes), x1, y1, x1 + w, y1 + h, conf)
}

// ---------------------------------------------------------------- detfuse

/// Three models on four images. Models 0 and 1 find every ground-truth box
/// with confidence 0.45; model 2 finds nothing real and emits one
/// confident (0.5) false positive per image.
pub fn third_model_false_positives() -> (Vec<Vec<DetectionSet>>, Vec<DetectionSet>) {
    let mut per_model = vec![Vec::new(), Vec::new(), Vec::new()];
    let mut gts = Vec::new();
    for k in 0..4 {
        let id = format!("img{k}");
        let o = 10.0 * k as f64;
        gts.push(DetectionSet::new(
            &id,
            vec![bx(0, o, o, o + 20.0, o + 20.0, 1.0)],
        ));
        per_model[0].push(DetectionSet::new(
            &id,
            vec![bx(0, o, o, o + 20.0, o + 20.0, 0.45)],
        ));
        per_model[1].push(DetectionSet::new(
            &id,
            vec![bx(0, o + 1.0, o, o + 21.0, o + 20.0, 0.45)],
        ));
        per_model[2].push(DetectionSet::new(
            &id,
            vec![bx(0, o + 100.0, o, o + 120.0, o + 20.0, 0.5)],
        ));
    }
    (per_model, gts)
}
