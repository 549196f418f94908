//! File loading and overwrite protection shared by the subcommands.

use std::fs;
use std::path::Path;

use bnnx::data::Dataset;
use bnnx::image::PreprocessConfig;
use bnnx::io::load_model;
use bnnx::io::parse_idx;
use bnnx::{Error, Model};

use crate::{CliError, CliResult, Located};

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(Error::from).at(path)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(Error::from).at(path)
}

pub fn read_model(path: &Path) -> CliResult<Model> {
    load_model(&read_bytes(path)?).at(path)
}

/// Existing files are never clobbered silently; that is what --force is for.
pub fn ensure_writable(path: &Path, force: bool) -> CliResult<()> {
    if !force && path.exists() {
        return Err(CliError::usage(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

pub fn load_idx_pair(
    images: &Path,
    labels: &Path,
    classes: Option<usize>,
    pre: Option<PreprocessConfig>,
) -> CliResult<Dataset> {
    let image_set = parse_idx(&read_bytes(images)?).at(images)?;
    let label_set = parse_idx(&read_bytes(labels)?).at(labels)?;
    let samples = image_set.images().at(images)?;
    let label_vec = label_set.labels().at(labels)?;
    let classes = match classes {
        Some(c) => c,
        None => one_past_max(&label_vec).ok_or_else(|| CliError::Lib {
            context: Some(labels.display().to_string()),
            source: Error::Malformed {
                format: "idx",
                msg: "no labels to infer the class count from".to_string(),
            },
        })?,
    };
    let data = Dataset::new(samples, label_vec, classes).at(images)?;
    match pre {
        Some(cfg) => data.with_preprocess(cfg).at(images),
        None => Ok(data),
    }
}

fn one_past_max(labels: &[u32]) -> Option<usize> {
    labels.iter().max().map(|&m| m as usize + 1)
}
