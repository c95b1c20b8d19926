use std::fs;

use anyhow::Context;
use spinebox_core::synthgen::{generate, write_shelf, CorpusSpec, SynthError};

use super::par_map;
use crate::args::SynthArgs;
use crate::error::{CliError, CliResult};
use crate::inputs::{create_dir, write_atomic};

/// The resolved spec, written next to the corpus.
pub const CORPUS_SPEC_FILE: &str = "corpus.json";

fn synth_error(e: SynthError) -> CliError {
    match e {
        SynthError::Format(_) => CliError::input(e),
        _ => CliError::config(e),
    }
}

pub fn run(args: &SynthArgs) -> CliResult<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read spec {}", path.display()))
                .map_err(CliError::input)?;
            serde_json::from_str::<CorpusSpec>(&text)
                .with_context(|| format!("bad spec {}", path.display()))
                .map_err(CliError::config)?
        }
        None => CorpusSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.images {
        spec.images = n;
    }
    spec.validate().map_err(synth_error)?;

    let pool = args.jobs.pool()?;
    create_dir(&args.out)?;
    par_map(&pool, &spec.shelves(), |(stem, shelf_spec)| {
        let shelf = generate(shelf_spec)
            .with_context(|| format!("shelf `{stem}`"))
            .map_err(CliError::config)?;
        write_shelf(&shelf, &args.out, stem).map_err(synth_error)?;
        Ok(())
    })?;
    let mut text = serde_json::to_string_pretty(&spec)
        .context("cannot serialize spec")
        .map_err(CliError::input)?;
    text.push('\n');
    write_atomic(&args.out.join(CORPUS_SPEC_FILE), text.as_bytes())
}
