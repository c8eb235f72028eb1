use std::fs;
use std::path::Path;

use qretina::data::{read_dataset, Dataset};
use qretina::train::{load_checkpoint, Model};

use crate::error::{CliError, CliResult};

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes `text` to `dir/name` and returns `name` for the manifest.
pub fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<String> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(name.to_owned())
}

pub fn load_model(path: &Path) -> CliResult<Model> {
    load_checkpoint(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load_dataset(dir: &Path) -> CliResult<Dataset> {
    let dataset = read_dataset(dir)?;
    if dataset.samples.is_empty() {
        return Err(CliError::Io(format!("{}: dataset has no images", dir.display())));
    }
    Ok(dataset)
}

/// A model can score a dataset only if both use the same labels and
/// image size.
pub fn check_compatible(model: &Model, dataset: &Dataset, label: &str) -> CliResult<()> {
    if model.config.class_names != dataset.class_names {
        return Err(CliError::Incompatible(format!(
            "{label} knows classes [{}], dataset has [{}]",
            model.config.class_names.join(", "),
            dataset.class_names.join(", ")
        )));
    }
    let size = model.config.image_size;
    if let Some(s) = dataset
        .samples
        .iter()
        .find(|s| s.image.height() != size || s.image.width() != size)
    {
        return Err(CliError::Incompatible(format!(
            "{label} expects {size}×{size} images, dataset has {}×{}",
            s.image.width(),
            s.image.height()
        )));
    }
    Ok(())
}
