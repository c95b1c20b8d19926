use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};

use crate::error::{CliError, CliResult};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];
pub const DETECTION_SUFFIX: &str = ".boxes.txt";
pub const TRUTH_SUFFIX: &str = ".gt.txt";

/// An input image and its file stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageInput {
    pub stem: String,
    pub path: PathBuf,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn sorted_entries(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut paths = Vec::new();
    let entries = fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))
        .map_err(CliError::input)?;
    for entry in entries {
        let entry = entry
            .with_context(|| format!("cannot list {}", dir.display()))
            .map_err(CliError::input)?;
        paths.push(entry.path());
    }
    paths.sort();
    Ok(paths)
}

/// Expands files and directories into images ordered by stem. Duplicate
/// stems are rejected since outputs are keyed by stem.
pub fn collect_images(paths: &[PathBuf]) -> CliResult<Vec<ImageInput>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            for f in sorted_entries(p)? {
                if f.is_file() && is_image(&f) {
                    out.push(ImageInput {
                        stem: stem_of(&f),
                        path: f,
                    });
                }
            }
        } else if p.is_file() {
            out.push(ImageInput {
                stem: stem_of(p),
                path: p.clone(),
            });
        } else {
            return Err(CliError::input(anyhow!(
                "{}: no such file or directory",
                p.display()
            )));
        }
    }
    out.sort_by(|a, b| a.stem.cmp(&b.stem));
    if let Some(w) = out.windows(2).find(|w| w[0].stem == w[1].stem) {
        return Err(CliError::input(anyhow!(
            "{} and {} share the stem `{}`",
            w[0].path.display(),
            w[1].path.display(),
            w[0].stem
        )));
    }
    Ok(out)
}

/// Stems of `<stem><suffix>` files in `dir`, sorted.
pub fn stems_with_suffix(dir: &Path, suffix: &str) -> CliResult<Vec<String>> {
    let mut stems: Vec<String> = sorted_entries(dir)?
        .iter()
        .filter_map(|p| {
            p.file_name()?
                .to_str()?
                .strip_suffix(suffix)
                .map(str::to_string)
        })
        .filter(|s| !s.is_empty())
        .collect();
    stems.sort();
    Ok(stems)
}

/// `<stem>.boxes.txt`, falling back to a `<stem>.json` sidecar.
pub fn detection_path(dir: &Path, stem: &str) -> CliResult<PathBuf> {
    let txt = dir.join(format!("{stem}{DETECTION_SUFFIX}"));
    if txt.is_file() {
        return Ok(txt);
    }
    let json = dir.join(format!("{stem}.json"));
    if json.is_file() {
        return Ok(json);
    }
    Err(CliError::input(anyhow!(
        "{}: no detections for `{stem}`",
        txt.display()
    )))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(CliError::input)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = temp_path(path);
    fs::write(&tmp, bytes)
        .and_then(|_| fs::rename(&tmp, path))
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::input)
}

/// Runs `write` against a temporary path, then renames it to `path`.
pub fn write_atomic_with<E>(
    path: &Path,
    write: impl FnOnce(&Path) -> Result<(), E>,
) -> CliResult<()>
where
    E: Into<anyhow::Error>,
{
    let tmp = temp_path(path);
    write(&tmp).map_err(CliError::input)?;
    fs::rename(&tmp, path)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::input)
}

/// `out` with its `.json`/`.csv` extension replaced by both.
pub fn report_paths(out: &Path) -> (PathBuf, PathBuf) {
    let base = match out.extension().and_then(|e| e.to_str()) {
        Some("json" | "csv") => out.with_extension(""),
        _ => out.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut name = base.file_name().unwrap_or_default().to_os_string();
        name.push(ext);
        base.with_file_name(name)
    };
    (with(".json"), with(".csv"))
}
