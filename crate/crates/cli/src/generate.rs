use std::fs;
use std::path::PathBuf;

use clap::Args;
use qretina::data::{generate, write_dataset, DatasetConfig, ANNOTATIONS_FILE, CLASSES_FILE, IMAGES_DIR};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::files::create_dir;
use crate::manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Images per class.
    #[arg(long)]
    pub per_class: usize,
    #[arg(long)]
    pub seed: u64,
    /// Image side in pixels.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Standard deviation of the additive pixel noise.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Place a second object when it fits.
    #[arg(long)]
    pub multi_object: bool,
    /// Replace an existing dataset in the output directory.
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &GenerateArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("generate");
    let config = DatasetConfig {
        image_size: args.size,
        samples_per_class: args.per_class,
        seed: args.seed,
        noise_level: args.noise,
        multi_object: args.multi_object,
    };
    config.validate()?;

    let occupied = fs::read_dir(&args.out)
        .map(|mut entries| entries.next().is_some())
        .unwrap_or(false);
    if occupied {
        if !args.force {
            return Err(CliError::Io(format!(
                "{} is not empty; pass --force to replace it",
                args.out.display()
            )));
        }
        let images = args.out.join(IMAGES_DIR);
        if images.exists() {
            fs::remove_dir_all(&images).map_err(|e| CliError::io(&images, e))?;
        }
        for name in [ANNOTATIONS_FILE, CLASSES_FILE, MANIFEST_FILE] {
            let path = args.out.join(name);
            if path.exists() {
                fs::remove_file(&path).map_err(|e| CliError::io(&path, e))?;
            }
        }
    }
    create_dir(&args.out)?;

    let samples = generate(&config)?;
    write_dataset(&args.out, &samples, &qretina::CLASS_NAMES)?;
    eprintln!("wrote {} images to {}", samples.len(), args.out.display());

    manifest.config = json!(config);
    manifest.seeds = json!({ "dataset": args.seed });
    manifest.inputs = json!({});
    manifest.outputs = vec![
        IMAGES_DIR.to_owned(),
        ANNOTATIONS_FILE.to_owned(),
        CLASSES_FILE.to_owned(),
    ];
    manifest.write(&args.out)
}
