use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use spinebox_core::io_formats::{format_boxes, load_detections, load_image, render_annotated};
use spinebox_core::{refine_pipeline, RefineConfig, RefineError};

use super::{load_truth, par_map};
use crate::args::RefineArgs;
use crate::error::{CliError, CliResult};
use crate::inputs::{
    collect_images, create_dir, detection_path, write_atomic, write_atomic_with, TRUTH_SUFFIX,
};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce a `refine` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: RefineConfig,
    pub render: bool,
    pub inputs: Vec<ManifestInput>,
    /// Only recorded on request, so repeated runs stay byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestInput {
    pub stem: String,
    pub image: PathBuf,
    pub detections: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

fn manifest_from_args(args: &RefineArgs) -> CliResult<RunManifest> {
    let config = args.config.resolve()?;
    let images = collect_images(&args.images)?;
    let mut inputs = Vec::with_capacity(images.len());
    for img in images {
        let dir = match &args.detections {
            Some(d) => d.clone(),
            None => img.path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        let detections = detection_path(&dir, &img.stem)?;
        let truth = args
            .gt
            .as_ref()
            .map(|g| g.join(format!("{}{TRUTH_SUFFIX}", img.stem)))
            .filter(|p| p.is_file());
        inputs.push(ManifestInput {
            stem: img.stem,
            image: img.path,
            detections,
            truth,
        });
    }
    Ok(RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        render: args.render,
        inputs,
        timings_ms: None,
    })
}

fn manifest_from_file(path: &Path) -> CliResult<RunManifest> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read manifest {}", path.display()))
        .map_err(CliError::input)?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .with_context(|| format!("bad manifest {}", path.display()))
        .map_err(CliError::config)?;
    manifest.config.validate().map_err(CliError::config)?;
    Ok(manifest)
}

fn refine_one(input: &ManifestInput, m: &RunManifest, out: &Path) -> CliResult<f64> {
    let start = Instant::now();
    let image = load_image(&input.image).map_err(CliError::input)?;
    let raw = load_detections(&input.detections)
        .map_err(CliError::input)?
        .boxes();
    let boxes = refine_pipeline(&image, &raw, &m.config).map_err(|e| match e {
        RefineError::Config { .. } => CliError::config(e),
        RefineError::Geometry(_) => {
            CliError::input(anyhow!(e).context(format!("refining {}", input.detections.display())))
        }
    })?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let txt = out.join(format!("{}.boxes.txt", input.stem));
    write_atomic(&txt, format_boxes(&boxes).as_bytes())?;
    if m.render {
        let truth = match &input.truth {
            Some(p) => Some(load_truth(p, &input.stem)?.books),
            None => None,
        };
        let png = out.join(format!("{}.png", input.stem));
        write_atomic_with(&png, |tmp| {
            render_annotated(&image, &boxes, truth.as_deref(), tmp)
        })?;
    }
    log::info!(
        "{}: {} raw -> {} boxes in {elapsed:.1} ms",
        input.stem,
        raw.len(),
        boxes.len()
    );
    Ok(elapsed)
}

pub fn run(args: &RefineArgs) -> CliResult<()> {
    let mut manifest = match &args.from_manifest {
        Some(path) => {
            let mut m = manifest_from_file(path)?;
            m.timings_ms = None;
            m
        }
        None => manifest_from_args(args)?,
    };
    let pool = args.jobs.pool()?;
    create_dir(&args.out)?;
    let timings = par_map(&pool, &manifest.inputs, |input| {
        refine_one(input, &manifest, &args.out)
    })?;
    if args.manifest_timings {
        manifest.timings_ms = Some(
            manifest
                .inputs
                .iter()
                .zip(timings)
                .map(|(i, t)| (i.stem.clone(), t))
                .collect(),
        );
    }
    let mut text = serde_json::to_string_pretty(&manifest)
        .context("cannot serialize manifest")
        .map_err(CliError::input)?;
    text.push('\n');
    write_atomic(&args.out.join(MANIFEST_FILE), text.as_bytes())
}
