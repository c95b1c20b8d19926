use anyhow::anyhow;
use spinebox_core::io_formats::{load_detections, Report, ReportRow};
use spinebox_core::metrics::{aggregate, evaluate_detailed, Evaluation};

use super::{load_truth, write_report};
use crate::args::EvalArgs;
use crate::error::{CliError, CliResult};
use crate::inputs::{stems_with_suffix, DETECTION_SUFFIX, TRUTH_SUFFIX};

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let pred_stems = stems_with_suffix(&args.pred, DETECTION_SUFFIX)?;
    let gt_stems = stems_with_suffix(&args.gt, TRUTH_SUFFIX)?;
    let missing: Vec<&str> = pred_stems
        .iter()
        .filter(|s| gt_stems.binary_search(s).is_err())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(CliError::input(anyhow!(
            "no ground truth in {} for: {}",
            args.gt.display(),
            missing.join(", ")
        )));
    }
    if gt_stems.is_empty() {
        return Err(CliError::input(anyhow!(
            "no `*{TRUTH_SUFFIX}` files in {}",
            args.gt.display()
        )));
    }

    let mut rows = Vec::with_capacity(gt_stems.len());
    let mut evaluations: Vec<Evaluation> = Vec::with_capacity(gt_stems.len());
    for stem in &gt_stems {
        let truth = load_truth(&args.gt.join(format!("{stem}{TRUTH_SUFFIX}")), stem)?;
        let predictions = if pred_stems.binary_search(stem).is_ok() {
            let path = args.pred.join(format!("{stem}{DETECTION_SUFFIX}"));
            load_detections(&path).map_err(CliError::input)?.boxes()
        } else {
            log::warn!("{stem}: no predictions, scoring as empty");
            Vec::new()
        };
        let e = evaluate_detailed(&predictions, &truth).map_err(CliError::input)?;
        rows.push(ReportRow {
            name: stem.clone(),
            metrics: e.report.clone(),
        });
        evaluations.push(e);
    }
    let total = aggregate(&evaluations).map_err(CliError::input)?;
    let report = Report {
        key: "image".into(),
        rows,
        total: Some(total),
    };
    write_report(&report, &args.out)
}
