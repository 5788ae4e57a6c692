use std::path::{Path, PathBuf};

use eadkit::augment::{self, Axis, CutScaling, RandomSource};
use eadkit::detfuse::{self, CoordWeighting, FusionMode};
use eadkit::io::{self, SplitCounts, Subset};
use eadkit::metrics::{self, Aggregation, MetricWeights};
use eadkit::segpost::{self, SegObjective, TripleThresholdConfig};
use eadkit::{binarize, BinaryMask, DetectionSet, ImageTensor, ProbMap};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::failure::{CliResult, Context, ExitKind, Failure};
use crate::session::{list_tensors, Session};

/// Result of one subcommand: its default report location and summary.
pub struct Outcome {
    pub report_path: PathBuf,
    pub summary: serde_json::Value,
}

fn report_in(dir: &Path) -> PathBuf {
    dir.join("run_report.json")
}

fn report_beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".report.json");
    file.with_file_name(name)
}

fn required(
    flag: Option<PathBuf>,
    from_config: &Option<PathBuf>,
    name: &str,
) -> CliResult<PathBuf> {
    flag.or_else(|| from_config.clone()).ok_or_else(|| {
        Failure::new(
            ExitKind::Usage,
            anyhow::anyhow!("--{name} is required (or set it in the config paths)"),
        )
    })
}

fn exactly<T, const N: usize>(values: &[T], flag: &str) -> CliResult<[T; N]>
where
    T: Copy,
{
    values.try_into().map_err(|_| {
        Failure::new(
            ExitKind::Usage,
            anyhow::anyhow!(
                "--{flag} takes {N} comma-separated values, got {}",
                values.len()
            ),
        )
    })
}

fn validate(s: &Session) -> CliResult<()> {
    s.config.validate().or_config()
}

fn read_masks(s: &mut Session, files: &[(String, PathBuf)]) -> CliResult<Vec<BinaryMask>> {
    files
        .iter()
        .map(|(_, p)| s.read_tensor(p)?.into_mask().ctx(p.display()))
        .collect()
}

type IdPath = (String, PathBuf);

/// Ground-truth masks plus the matching `<id>.eadt` file from `pred_dir` for
/// each one. Ground truth decides which ids take part.
fn paired_files(pred_dir: &Path, gt_dir: &Path) -> CliResult<(Vec<IdPath>, Vec<IdPath>)> {
    let gts = list_tensors(gt_dir)?;
    if gts.is_empty() {
        return Err(eadkit::Error::EmptyDataset).ctx(gt_dir.display());
    }
    let preds = gts
        .iter()
        .map(|(id, _)| {
            let p = pred_dir.join(format!("{id}.eadt"));
            if p.is_file() {
                Ok((id.clone(), p))
            } else {
                Err(Failure::new(
                    ExitKind::Io,
                    anyhow::anyhow!(
                        "{}: missing prediction for ground-truth image `{id}`",
                        p.display()
                    ),
                ))
            }
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((preds, gts))
}

pub fn split(s: &mut Session, a: &SplitArgs) -> CliResult<Outcome> {
    let text = s.read_bytes(&a.ids)?;
    let ids = io::parse_id_list(&String::from_utf8_lossy(&text));
    let [train, validation, holdout] = exactly(&a.counts, "counts")?;
    let counts = SplitCounts::new(train, validation, holdout);
    let manifest = io::split_sequential(&ids, counts).ctx(a.ids.display())?;
    let mut sizes = serde_json::Map::new();
    for subset in Subset::ALL {
        let part = manifest.only(subset);
        sizes.insert(subset.name().into(), json!(part.entries.len()));
        s.emit_json(a.out_dir.join(format!("{}.json", subset.name())), &part);
    }
    Ok(Outcome {
        report_path: report_in(&a.out_dir),
        summary: json!({ "counts": sizes }),
    })
}

#[derive(Debug, Serialize)]
struct SampleLog {
    image_id: String,
    crop: augment::CropSpec,
    hflip: bool,
    vflip: bool,
}

#[derive(Debug, Serialize)]
struct AugmentLog {
    stage: usize,
    stage_config: augment::Stage,
    samples: Vec<SampleLog>,
    cutmix: Option<augment::CutMixRecord>,
}

fn augment_one(
    img: &ImageTensor,
    mask: &BinaryMask,
    rng: &mut RandomSource,
    opts: &io::config::AugmentOptions,
    stage: augment::Stage,
) -> eadkit::Result<(ImageTensor, BinaryMask, augment::CropSpec, bool, bool)> {
    let size = opts.crop_size;
    let (img, _) = augment::pad_to_size(img, size, size)?;
    let (mask, _) = augment::pad_to_size(mask, size, size)?;
    let (mut img, mut mask, spec) =
        augment::crop_with_policy(&img, &mask, size, stage.crop_policy, rng)?;
    let hflip = rng.chance(opts.hflip_prob);
    if hflip {
        img = augment::flip(&img, Axis::Horizontal);
        mask = augment::flip(&mask, Axis::Horizontal);
    }
    let vflip = rng.chance(opts.vflip_prob);
    if vflip {
        img = augment::flip(&img, Axis::Vertical);
        mask = augment::flip(&mask, Axis::Vertical);
    }
    if opts.cutout_holes > 0 && opts.cutout_size > 0 {
        img = augment::cutout(&img, rng, opts.cutout_holes, opts.cutout_size);
    }
    Ok((img, mask, spec, hflip, vflip))
}

pub fn augment(s: &mut Session, a: &AugmentArgs) -> CliResult<Outcome> {
    let o = &mut s.config.augment;
    if let Some(v) = a.crop_size {
        o.crop_size = v;
    }
    if let Some(v) = a.hflip_prob {
        o.hflip_prob = v;
    }
    if let Some(v) = a.vflip_prob {
        o.vflip_prob = v;
    }
    if let Some(v) = a.cutout_holes {
        o.cutout_holes = v;
    }
    if let Some(v) = a.cutout_size {
        o.cutout_size = v;
    }
    if a.literal_cutmix {
        o.cutmix_scaling = CutScaling::Literal;
    }
    validate(s)?;
    let stage = s.config.schedule.stage_config(a.stage).or_config()?;
    let opts = s.config.augment.clone();

    let images = list_tensors(&a.images)?;
    if images.is_empty() {
        return Err(eadkit::Error::EmptyDataset).ctx(a.images.display());
    }
    let mut samples = Vec::with_capacity(images.len());
    for (id, path) in &images {
        let img = s.read_tensor(path)?.into_image().ctx(path.display())?;
        let mpath = a.masks.join(format!("{id}.eadt"));
        let mask = s.read_tensor(&mpath)?.into_mask().ctx(mpath.display())?;
        samples.push((id.clone(), img, mask));
    }

    let root = RandomSource::new(s.seed);
    let processed = samples
        .par_iter()
        .enumerate()
        .map(|(i, (id, img, mask))| {
            let mut rng = root.fork(i as u64);
            augment_one(img, mask, &mut rng, &opts, stage).ctx(format!("image `{id}`"))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut logs = Vec::with_capacity(processed.len());
    let mut batch = Vec::with_capacity(processed.len());
    for ((id, ..), (img, mask, crop, hflip, vflip)) in samples.iter().zip(processed) {
        logs.push(SampleLog {
            image_id: id.clone(),
            crop,
            hflip,
            vflip,
        });
        batch.push((img, mask));
    }
    let mut record = None;
    if stage.cutmix_enabled && batch.len() >= 2 {
        let mut rng = root.fork(batch.len() as u64);
        let (mixed, rec) = augment::cutmix(&batch, &mut rng, opts.cutmix_scaling).ctx("cutmix")?;
        batch = mixed;
        record = Some(rec);
    }
    for ((id, ..), (img, mask)) in samples.iter().zip(&batch) {
        s.emit_tensor(a.out_dir.join("images").join(format!("{id}.eadt")), img);
        s.emit_tensor(a.out_dir.join("masks").join(format!("{id}.eadt")), mask);
    }
    let log = AugmentLog {
        stage: a.stage,
        stage_config: stage,
        samples: logs,
        cutmix: record,
    };
    s.emit_json(a.out_dir.join("augment_log.json"), &log);
    Ok(Outcome {
        report_path: report_in(&a.out_dir),
        summary: json!({ "samples": batch.len(), "cutmix": log.cutmix.is_some() }),
    })
}

pub fn ensemble_seg(s: &mut Session, a: &EnsembleSegArgs) -> CliResult<Outcome> {
    if let Some(t) = a.select_threshold {
        s.config.segmentation.selection_threshold = t;
    }
    validate(s)?;
    let mut members: Vec<PathBuf> = a.models.clone();
    let mut selection = None;
    if !a.dice.is_empty() {
        if a.dice.len() != a.models.len() {
            return Err(Failure::new(
                ExitKind::Usage,
                anyhow::anyhow!(
                    "--dice given {} times for {} --model directories",
                    a.dice.len(),
                    a.models.len()
                ),
            ));
        }
        let candidates: Vec<(String, f64)> = a
            .models
            .iter()
            .zip(&a.dice)
            .map(|(m, &d)| (m.display().to_string(), d))
            .collect();
        let sel = segpost::select_members(&candidates, s.config.segmentation.selection_threshold);
        members = sel.members.iter().map(|m| PathBuf::from(&m.id)).collect();
        selection = Some(sel);
    }
    if members.is_empty() {
        return Err(eadkit::Error::EmptyEnsemble).ctx("model selection");
    }

    let ids = list_tensors(&members[0])?;
    if ids.is_empty() {
        return Err(eadkit::Error::EmptyDataset).ctx(members[0].display());
    }
    let mut per_image = Vec::with_capacity(ids.len());
    for (id, _) in &ids {
        let maps = members
            .iter()
            .map(|dir| {
                let p = dir.join(format!("{id}.eadt"));
                s.read_tensor(&p)?.into_prob_map().ctx(p.display())
            })
            .collect::<CliResult<Vec<ProbMap>>>()?;
        per_image.push(maps);
    }
    let averaged = per_image
        .par_iter()
        .zip(&ids)
        .map(|(maps, (id, _))| segpost::pixel_ensemble(maps).ctx(format!("image `{id}`")))
        .collect::<CliResult<Vec<_>>>()?;
    for ((id, _), map) in ids.iter().zip(&averaged) {
        s.emit_tensor(a.out_dir.join(format!("{id}.eadt")), map);
    }
    Ok(Outcome {
        report_path: report_in(&a.out_dir),
        summary: json!({
            "members": members,
            "images": ids.len(),
            "selection": selection,
        }),
    })
}

fn threshold_config(s: &Session, f: &ThresholdFlags) -> CliResult<TripleThresholdConfig> {
    let base = s.config.segmentation.triple_threshold.clone();
    let max = f.max_prob.or(base.as_ref().map(|b| b.max_prob_thresh));
    let min = f.min_prob.or(base.as_ref().map(|b| b.min_prob_thresh));
    let areas = f.areas.clone().or(base.map(|b| b.min_area_thresh));
    match (max, min, areas) {
        (Some(max), Some(min), Some(areas)) => TripleThresholdConfig::new(max, min, areas).or_config(),
        _ => Err(Failure::config(
            "segmentation.triple_threshold: --max, --min and --areas are required when the config does not set them",
        )),
    }
}

pub fn triple_threshold(s: &mut Session, a: &TripleThresholdArgs) -> CliResult<Outcome> {
    let cfg = threshold_config(s, &a.thresholds)?;
    s.config.segmentation.triple_threshold = Some(cfg.clone());
    validate(s)?;
    let files = list_tensors(&a.pred)?;
    let maps = files
        .iter()
        .map(|(_, p)| s.read_tensor(p)?.into_prob_map().ctx(p.display()))
        .collect::<CliResult<Vec<_>>>()?;
    let masks = maps
        .par_iter()
        .zip(&files)
        .map(|(m, (id, _))| segpost::triple_threshold(m, &cfg).ctx(format!("image `{id}`")))
        .collect::<CliResult<Vec<_>>>()?;
    for ((id, _), m) in files.iter().zip(&masks) {
        s.emit_tensor(a.out_dir.join(format!("{id}.eadt")), m);
    }
    Ok(Outcome {
        report_path: report_in(&a.out_dir),
        summary: json!({ "images": files.len(), "triple_threshold": cfg }),
    })
}

fn parse_max_grid(values: &[String]) -> CliResult<Vec<Option<f64>>> {
    values
        .iter()
        .map(|v| {
            if v.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                v.parse::<f64>().map(Some).map_err(|_| {
                    Failure::new(
                        ExitKind::Usage,
                        anyhow::anyhow!("--max-grid: `{v}` is not a number or `none`"),
                    )
                })
            }
        })
        .collect()
}

pub fn tune_seg(s: &mut Session, a: &TuneSegArgs) -> CliResult<Outcome> {
    let pred_dir = required(a.pred.clone(), &s.config.paths.predictions, "pred")?;
    let gt_dir = required(a.gt.clone(), &s.config.paths.ground_truth, "gt")?;
    let seg = &mut s.config.segmentation;
    if let Some(v) = &a.min_grid {
        seg.grid.min_values = v.clone();
    }
    if let Some(v) = &a.max_grid {
        seg.grid.max_values = parse_max_grid(v)?;
    }
    if let Some(o) = a.objective {
        seg.objective = match o {
            ObjectiveArg::Precision => SegObjective::Precision,
            ObjectiveArg::Dice => SegObjective::Dice,
            ObjectiveArg::Iou => SegObjective::Iou,
            ObjectiveArg::F2 => SegObjective::F2,
            ObjectiveArg::Composite => SegObjective::Composite {
                weights: seg.metric_weights,
            },
        };
    }
    if a.macro_avg {
        seg.aggregation = Aggregation::Macro;
    }
    validate(s)?;

    let (pred_files, gt_files) = paired_files(&pred_dir, &gt_dir)?;
    let preds = pred_files
        .iter()
        .map(|(_, p)| s.read_tensor(p)?.into_prob_map().ctx(p.display()))
        .collect::<CliResult<Vec<_>>>()?;
    let gts = read_masks(s, &gt_files)?;
    let seg = &s.config.segmentation;
    let (areas, area_source) = match (&a.areas, &seg.triple_threshold) {
        (Some(v), _) => (v.clone(), "flag"),
        (None, Some(tt)) => (tt.min_area_thresh.clone(), "config"),
        (None, None) => (
            segpost::min_area_from_dataset(&gts, seg.area_percentile).ctx(gt_dir.display())?,
            "ground_truth_percentile",
        ),
    };
    let result = segpost::tune_triple_threshold(
        &preds,
        &gts,
        &seg.grid,
        &areas,
        seg.objective,
        seg.aggregation,
    )
    .ctx("tune-seg")?;
    s.emit_json(a.out.clone(), &result);
    Ok(Outcome {
        report_path: report_beside(&a.out),
        summary: json!({
            "images": preds.len(),
            "cells": result.table.len(),
            "min_area_thresh": areas,
            "area_source": area_source,
            "best": result.best,
        }),
    })
}

#[derive(Debug, Serialize)]
pub struct MinAreaOutput {
    pub percentile: f64,
    pub min_area_thresh: Vec<u64>,
}

pub fn min_area(s: &mut Session, a: &MinAreaArgs) -> CliResult<Outcome> {
    let gt_dir = required(a.gt.clone(), &s.config.paths.ground_truth, "gt")?;
    if let Some(p) = a.percentile {
        s.config.segmentation.area_percentile = p;
    }
    validate(s)?;
    let files = list_tensors(&gt_dir)?;
    let gts = read_masks(s, &files)?;
    let percentile = s.config.segmentation.area_percentile;
    let out = MinAreaOutput {
        percentile,
        min_area_thresh: segpost::min_area_from_dataset(&gts, percentile).ctx(gt_dir.display())?,
    };
    s.emit_json(a.out.clone(), &out);
    Ok(Outcome {
        report_path: report_beside(&a.out),
        summary: json!({ "images": gts.len(), "min_area_thresh": out.min_area_thresh }),
    })
}

fn read_models(
    s: &mut Session,
    models: &[PathBuf],
    model_score: Option<f64>,
) -> CliResult<Vec<Vec<DetectionSet>>> {
    models
        .iter()
        .map(|p| {
            let sets = s.read_detections(p)?;
            Ok(match model_score {
                Some(t) => sets
                    .iter()
                    .map(|d| detfuse::filter_by_score(d, t))
                    .collect(),
                None => sets,
            })
        })
        .collect()
}

/// Uniform weights say nothing about the model count, so the all-ones
/// default is stretched to however many models were given.
fn stretch_uniform(weights: &mut Vec<f64>, models: usize) {
    if weights.len() != models && weights.iter().all(|&w| w == 1.0) {
        *weights = vec![1.0; models];
    }
}

pub fn ensemble_det(s: &mut Session, a: &EnsembleDetArgs) -> CliResult<Outcome> {
    let f = &a.fusion;
    let d = &mut s.config.detection;
    if let Some(v) = f.iou {
        d.fusion.iou_thresh = v;
    }
    if let Some(v) = f.score {
        d.fusion.score_thresh = v;
    }
    match &f.weights {
        Some(w) => d.fusion.weights = w.clone(),
        None => stretch_uniform(&mut d.fusion.weights, a.models.len()),
    }
    if f.suppress {
        d.fusion.mode = FusionMode::Suppress;
    }
    if f.uniform_coords {
        d.fusion.coords = CoordWeighting::Uniform;
    }
    if f.model_score.is_some() {
        d.model_score_thresh = f.model_score;
    }
    validate(s)?;
    let per_model = read_models(s, &a.models, s.config.detection.model_score_thresh)?;
    let fused =
        detfuse::fuse_dataset(&per_model, &s.config.detection.fusion).ctx("ensemble-det")?;
    let boxes: usize = fused.iter().map(|d| d.boxes.len()).sum();
    s.emit_json(a.out.clone(), &fused);
    Ok(Outcome {
        report_path: report_beside(&a.out),
        summary: json!({ "images": fused.len(), "boxes": boxes, "fusion": s.config.detection.fusion }),
    })
}

pub fn tune_det(s: &mut Session, a: &TuneDetArgs) -> CliResult<Outcome> {
    let gt_path = required(a.gt.clone(), &s.config.paths.ground_truth, "gt")?;
    let d = &mut s.config.detection;
    if let Some(v) = a.ap_iou {
        d.ap_iou = v;
    }
    if a.suppress {
        d.fusion.mode = FusionMode::Suppress;
    }
    if a.uniform_coords {
        d.fusion.coords = CoordWeighting::Uniform;
    }
    if a.model_score.is_some() {
        d.model_score_thresh = a.model_score;
    }
    stretch_uniform(&mut d.fusion.weights, a.models.len());
    validate(s)?;
    let per_model = read_models(s, &a.models, s.config.detection.model_score_thresh)?;
    let gts = s.read_detections(&gt_path)?;
    let d = &s.config.detection;
    let result =
        detfuse::tune_fusion(&per_model, &gts, &d.grid, &d.fusion, d.ap_iou).ctx("tune-det")?;
    s.emit_json(a.out.clone(), &result);
    Ok(Outcome {
        report_path: report_beside(&a.out),
        summary: json!({ "cells": result.table.len(), "best": result.best }),
    })
}

pub fn eval_seg(s: &mut Session, a: &EvalSegArgs) -> CliResult<Outcome> {
    let pred_dir = required(a.pred.clone(), &s.config.paths.predictions, "pred")?;
    let gt_dir = required(a.gt.clone(), &s.config.paths.ground_truth, "gt")?;
    let seg = &mut s.config.segmentation;
    if let Some(t) = a.threshold {
        seg.eval_threshold = t;
    }
    if a.macro_avg {
        seg.aggregation = Aggregation::Macro;
    }
    if let Some(w) = &a.weights {
        let [dice, iou, f2] = exactly(w, "weights")?;
        seg.metric_weights = MetricWeights { dice, iou, f2 };
    }
    validate(s)?;
    let (pred_files, gt_files) = paired_files(&pred_dir, &gt_dir)?;
    let threshold = s.config.segmentation.eval_threshold;
    let preds = pred_files
        .iter()
        .map(|(_, p)| match s.read_tensor(p)? {
            io::eadt::TensorFile::Mask(m) => Ok(m),
            io::eadt::TensorFile::Prob(pm) => binarize(&pm, threshold).ctx(p.display()),
        })
        .collect::<CliResult<Vec<_>>>()?;
    let gts = read_masks(s, &gt_files)?;
    let seg = &s.config.segmentation;
    let report = metrics::evaluate_segmentation(&preds, &gts, &seg.metric_weights, seg.aggregation)
        .ctx("eval-seg")?;
    s.emit_json(a.out.clone(), &report);
    Ok(Outcome {
        report_path: report_beside(&a.out),
        summary: json!({ "mean": report.mean, "composite": report.composite }),
    })
}

pub fn eval_det(s: &mut Session, a: &EvalDetArgs) -> CliResult<Outcome> {
    let pred = required(a.pred.clone(), &s.config.paths.predictions, "pred")?;
    let gt = required(a.gt.clone(), &s.config.paths.ground_truth, "gt")?;
    if let Some(v) = a.iou {
        s.config.detection.ap_iou = v;
    }
    validate(s)?;
    let preds = s.read_detections(&pred)?;
    let gts = s.read_detections(&gt)?;
    let result = metrics::mean_ap(&preds, &gts, s.config.detection.ap_iou).ctx("eval-det")?;
    s.emit_json(a.out.clone(), &result);
    Ok(Outcome {
        report_path: report_beside(&a.out),
        summary: json!({ "map": result.map }),
    })
}
