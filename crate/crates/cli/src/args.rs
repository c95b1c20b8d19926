use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use spinebox_core::RefineConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "spinebox",
    version,
    about = "Refine scene-text boxes into one box per book spine"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refine raw detections into one box per book.
    Refine(RefineArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic shelf corpus.
    Synth(SynthArgs),
    /// Draw boxes (and optionally ground truth) over images.
    Render(RenderArgs),
    /// Compare the naive baseline with the refinement stages.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct JobsArg {
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, env = "SPINEBOX_JOBS", value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
}

impl JobsArg {
    pub fn pool(&self) -> CliResult<rayon::ThreadPool> {
        let n = self
            .jobs
            .map(|j| j as usize)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(CliError::config)
    }
}

/// Refinement settings: a JSON file, then per-field flag overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON file with refinement settings.
    #[arg(long, value_name = "JSON")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "PX")]
    pub adjust_range_px: Option<u32>,
    #[arg(long, value_name = "DEG")]
    pub adjust_range_deg: Option<u32>,
    #[arg(long, value_name = "RGB")]
    pub threshold_text: Option<f64>,
    #[arg(long, value_name = "RGB")]
    pub threshold_spine: Option<f64>,
    #[arg(long, value_name = "RATE")]
    pub wide_range_rate: Option<f64>,
    #[arg(long, value_name = "FRACTION")]
    pub shrink_x: Option<f64>,
    #[arg(long, value_name = "FRACTION")]
    pub shrink_y: Option<f64>,
    #[arg(long, value_name = "IOU")]
    pub nms_iou: Option<f64>,
    #[arg(long, value_name = "PX")]
    pub min_edge_px: Option<f64>,
    #[arg(long, value_name = "BOOL")]
    pub enable_adjust_location: Option<bool>,
    #[arg(long, value_name = "BOOL")]
    pub enable_adjust_angle: Option<bool>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> CliResult<RefineConfig> {
        let base = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))
                    .map_err(CliError::config)?;
                serde_json::from_str(&text)
                    .with_context(|| format!("bad config {}", path.display()))
                    .map_err(CliError::config)?
            }
            None => RefineConfig::default(),
        };
        let cfg = self.apply(base);
        cfg.validate().map_err(CliError::config)?;
        Ok(cfg)
    }

    fn apply(&self, mut cfg: RefineConfig) -> RefineConfig {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field {
                    cfg.$field = v;
                })*
            };
        }
        set!(
            adjust_range_px,
            adjust_range_deg,
            threshold_text,
            threshold_spine,
            wide_range_rate,
            shrink_x,
            shrink_y,
            nms_iou,
            min_edge_px,
            enable_adjust_location,
            enable_adjust_angle
        );
        cfg
    }
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Image files or directories of `.png`/`.jpg` images.
    #[arg(long, num_args = 1.., value_name = "PATH", required_unless_present = "from_manifest")]
    pub images: Vec<PathBuf>,
    /// Directory holding `<stem>.boxes.txt` or `<stem>.json`; defaults to each image's directory.
    #[arg(long, value_name = "DIR")]
    pub detections: Option<PathBuf>,
    /// Directory of `<stem>.gt.txt` files drawn by `--render`.
    #[arg(long, value_name = "DIR")]
    pub gt: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Also write `<stem>.png` with the refined boxes drawn in.
    #[arg(long)]
    pub render: bool,
    /// Record per-image wall-clock timings in the manifest.
    #[arg(long)]
    pub manifest_timings: bool,
    /// Re-run exactly the inputs and settings recorded in a manifest.
    #[arg(long, value_name = "JSON", conflicts_with_all = ["images", "detections", "gt", "render", "config"])]
    pub from_manifest: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of `<stem>.boxes.txt` predictions.
    #[arg(long, value_name = "DIR")]
    pub pred: PathBuf,
    /// Directory of `<stem>.gt.txt` ground truth.
    #[arg(long, value_name = "DIR")]
    pub gt: PathBuf,
    /// Report path; `.json` and `.csv` siblings are written.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus spec JSON; defaults apply to missing fields.
    #[arg(long, value_name = "JSON")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub images: Option<usize>,
    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Image files or directories of images.
    #[arg(long, num_args = 1.., value_name = "PATH", required = true)]
    pub images: Vec<PathBuf>,
    /// Directory of `<stem>.boxes.txt` files to draw in red.
    #[arg(long, value_name = "DIR")]
    pub boxes: PathBuf,
    /// Directory of `<stem>.gt.txt` files to draw dashed in green.
    #[arg(long, value_name = "DIR")]
    pub gt: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub jobs: JobsArg,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Directory with `<stem>.png`, `<stem>.boxes.txt` and `<stem>.gt.txt`.
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    /// Report path; `.json` and `.csv` siblings are written.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub jobs: JobsArg,
}
