use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "eadkit",
    version,
    about = "Artefact segmentation/detection post-processing and evaluation"
)]
pub struct Cli {
    /// Run config JSON; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed for stochastic subcommands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Where to write the run report (default: next to the main output).
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split an id list (one per line) into train/validation/holdout in order.
    Split(SplitArgs),
    /// Crop, flip, cut out and CutMix a set of image/mask pairs.
    Augment(AugmentArgs),
    /// Average probability maps from several models.
    EnsembleSeg(EnsembleSegArgs),
    /// Apply the triple threshold to probability maps.
    TripleThreshold(TripleThresholdArgs),
    /// Grid-search min/max probability thresholds.
    TuneSeg(TuneSegArgs),
    /// Derive per-class minimum areas from ground-truth masks.
    MinArea(MinAreaArgs),
    /// Fuse detections from several models.
    EnsembleDet(EnsembleDetArgs),
    /// Grid-search fusion parameters against ground truth.
    TuneDet(TuneDetArgs),
    /// Dice/IoU/F2/precision report for masks.
    EvalSeg(EvalSegArgs),
    /// mAP report for detections.
    EvalDet(EvalDetArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Split(_) => "split",
            Command::Augment(_) => "augment",
            Command::EnsembleSeg(_) => "ensemble-seg",
            Command::TripleThreshold(_) => "triple-threshold",
            Command::TuneSeg(_) => "tune-seg",
            Command::MinArea(_) => "min-area",
            Command::EnsembleDet(_) => "ensemble-det",
            Command::TuneDet(_) => "tune-det",
            Command::EvalSeg(_) => "eval-seg",
            Command::EvalDet(_) => "eval-det",
        }
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub ids: PathBuf,
    /// Subset sizes as TRAIN,VALIDATION,HOLDOUT.
    #[arg(long, value_delimiter = ',', required = true)]
    pub counts: Vec<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Directory of `<id>.eadt` float images.
    #[arg(long)]
    pub images: PathBuf,
    /// Directory of `<id>.eadt` boolean masks.
    #[arg(long)]
    pub masks: PathBuf,
    /// 1-based stage of the configured schedule.
    #[arg(long, default_value_t = 1)]
    pub stage: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub crop_size: Option<usize>,
    #[arg(long)]
    pub hflip_prob: Option<f64>,
    #[arg(long)]
    pub vflip_prob: Option<f64>,
    #[arg(long)]
    pub cutout_holes: Option<usize>,
    #[arg(long)]
    pub cutout_size: Option<usize>,
    /// Use unscaled CutMix side lengths.
    #[arg(long)]
    pub literal_cutmix: bool,
}

#[derive(Debug, Args)]
pub struct EnsembleSegArgs {
    /// Directory of one model's `<id>.eadt` probability maps (repeatable).
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Validation dice per model, same order as --model; enables selection.
    #[arg(long = "dice")]
    pub dice: Vec<f64>,
    #[arg(long)]
    pub select_threshold: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ThresholdFlags {
    #[arg(long = "max")]
    pub max_prob: Option<f64>,
    #[arg(long = "min")]
    pub min_prob: Option<f64>,
    /// Per-class minimum areas.
    #[arg(long, value_delimiter = ',')]
    pub areas: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
pub struct TripleThresholdArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub thresholds: ThresholdFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Precision,
    Dice,
    Iou,
    F2,
    Composite,
}

#[derive(Debug, Args)]
pub struct TuneSegArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-class areas; defaults to the config, then to the ground-truth percentile.
    #[arg(long, value_delimiter = ',')]
    pub areas: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub min_grid: Option<Vec<f64>>,
    /// Max thresholds; `none` stands for the ungated baseline.
    #[arg(long, value_delimiter = ',')]
    pub max_grid: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    #[arg(long = "macro")]
    pub macro_avg: bool,
}

#[derive(Debug, Args)]
pub struct MinAreaArgs {
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub percentile: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FusionFlags {
    #[arg(long)]
    pub iou: Option<f64>,
    #[arg(long)]
    pub score: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Keep the top box of each cluster instead of averaging.
    #[arg(long)]
    pub suppress: bool,
    /// Average corners without confidence weighting.
    #[arg(long)]
    pub uniform_coords: bool,
    /// Per-model confidence filter applied before fusion.
    #[arg(long)]
    pub model_score: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnsembleDetArgs {
    /// One model's detection JSON (repeatable).
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fusion: FusionFlags,
}

#[derive(Debug, Args)]
pub struct TuneDetArgs {
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ap_iou: Option<f64>,
    #[arg(long)]
    pub suppress: bool,
    #[arg(long)]
    pub uniform_coords: bool,
    #[arg(long)]
    pub model_score: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalSegArgs {
    /// Masks, or probability maps binarised at --threshold.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long = "macro")]
    pub macro_avg: bool,
    /// Composite weights as DICE,IOU,F2.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct EvalDetArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub iou: Option<f64>,
}
