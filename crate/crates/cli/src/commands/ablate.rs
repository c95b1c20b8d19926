use anyhow::anyhow;
use spinebox_core::io_formats::{load_detections, load_image, Report, ReportRow};
use spinebox_core::metrics::{aggregate, evaluate_detailed, Evaluation};
use spinebox_core::refine::naive_pipeline;
use spinebox_core::{refine_pipeline, RefineConfig};

use super::{load_truth, par_map, write_report};
use crate::args::AblateArgs;
use crate::error::{CliError, CliResult};
use crate::inputs::{collect_images, detection_path, TRUTH_SUFFIX};

/// Row names, in report order.
pub const ABLATION_ROWS: [&str; 4] = [
    "naive",
    "grouping",
    "grouping+adjusting(location)",
    "grouping+adjusting(location+angle)",
];

fn stage_configs(base: &RefineConfig) -> [RefineConfig; 3] {
    let with = |location, angle| RefineConfig {
        enable_adjust_location: location,
        enable_adjust_angle: angle,
        ..base.clone()
    };
    [with(false, false), with(true, false), with(true, true)]
}

pub fn run(args: &AblateArgs) -> CliResult<()> {
    let base = args.config.resolve()?;
    let stages = stage_configs(&base);
    let images = collect_images(std::slice::from_ref(&args.corpus))?;
    if images.is_empty() {
        return Err(CliError::input(anyhow!(
            "no images in {}",
            args.corpus.display()
        )));
    }
    let pool = args.jobs.pool()?;
    let per_image = par_map(&pool, &images, |input| {
        let image = load_image(&input.path).map_err(CliError::input)?;
        let raw = load_detections(&detection_path(&args.corpus, &input.stem)?)
            .map_err(CliError::input)?
            .boxes();
        let truth = load_truth(
            &args.corpus.join(format!("{}{TRUTH_SUFFIX}", input.stem)),
            &input.stem,
        )?;
        let mut outputs = vec![naive_pipeline(&raw, &base)];
        for cfg in &stages {
            outputs.push(refine_pipeline(&image, &raw, cfg).map_err(CliError::input)?);
        }
        outputs
            .iter()
            .map(|boxes| evaluate_detailed(boxes, &truth).map_err(CliError::input))
            .collect::<CliResult<Vec<Evaluation>>>()
    })?;

    let mut rows = Vec::with_capacity(ABLATION_ROWS.len());
    for (k, name) in ABLATION_ROWS.iter().enumerate() {
        let column: Vec<Evaluation> = per_image.iter().map(|e| e[k].clone()).collect();
        rows.push(ReportRow {
            name: name.to_string(),
            metrics: aggregate(&column).map_err(CliError::input)?,
        });
    }
    let report = Report {
        key: "config".into(),
        rows,
        total: None,
    };
    write_report(&report, &args.out)
}
