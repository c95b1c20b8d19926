mod ablate;
mod eval;
mod refine;
mod render;
mod synth;

use std::path::Path;

use anyhow::Context;
use rayon::prelude::*;
use spinebox_core::io_formats::{self, load_ground_truth, Report};
use spinebox_core::metrics::GroundTruth;

use crate::error::{CliError, CliResult};
use crate::inputs::{report_paths, write_atomic};

pub use ablate::run as ablate;
pub use eval::run as eval;
pub use refine::run as refine;
pub use render::run as render;
pub use synth::run as synth;

/// Maps `f` over `items` on `pool`, keeping input order, and returns the
/// first error in that order.
fn par_map<T, R, F>(pool: &rayon::ThreadPool, items: &[T], f: F) -> CliResult<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> CliResult<R> + Sync + Send,
{
    pool.install(|| items.par_iter().map(&f).collect::<Vec<_>>())
        .into_iter()
        .collect()
}

fn load_truth(path: &Path, stem: &str) -> CliResult<GroundTruth> {
    let file = load_ground_truth(path).map_err(CliError::input)?;
    if file.books.is_empty() {
        return Err(CliError::input(anyhow::anyhow!(
            "{}: no ground-truth books",
            path.display()
        )));
    }
    Ok(GroundTruth::new(stem, file.books))
}

fn write_report(report: &Report, out: &Path) -> CliResult<()> {
    let (json, csv) = report_paths(out);
    if let Some(dir) = json.parent().filter(|d| !d.as_os_str().is_empty()) {
        crate::inputs::create_dir(dir)?;
    }
    let mut text = serde_json::to_string_pretty(report)
        .context("cannot serialize report")
        .map_err(CliError::input)?;
    text.push('\n');
    write_atomic(&json, text.as_bytes())?;
    write_atomic(&csv, io_formats::report_to_csv(report).as_bytes())?;
    Ok(())
}
