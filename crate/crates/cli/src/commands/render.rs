use spinebox_core::io_formats::{load_detections, load_image, render_annotated};

use super::{load_truth, par_map};
use crate::args::RenderArgs;
use crate::error::{CliError, CliResult};
use crate::inputs::{collect_images, create_dir, detection_path, write_atomic_with, TRUTH_SUFFIX};

pub fn run(args: &RenderArgs) -> CliResult<()> {
    let images = collect_images(&args.images)?;
    let pool = args.jobs.pool()?;
    create_dir(&args.out)?;
    par_map(&pool, &images, |input| {
        let image = load_image(&input.path).map_err(CliError::input)?;
        let boxes = load_detections(&detection_path(&args.boxes, &input.stem)?)
            .map_err(CliError::input)?
            .boxes();
        let truth = match &args.gt {
            Some(dir) => {
                let path = dir.join(format!("{}{TRUTH_SUFFIX}", input.stem));
                Some(load_truth(&path, &input.stem)?.books)
            }
            None => None,
        };
        let out = args.out.join(format!("{}.png", input.stem));
        write_atomic_with(&out, |tmp| {
            render_annotated(&image, &boxes, truth.as_deref(), tmp)
        })
    })?;
    Ok(())
}
