use std::path::PathBuf;

use clap::Args;
use qretina::train::{fit_with, save_checkpoint, FitLog, Model, ModelConfig, StemKind, TrainConfig};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::files::{create_dir, load_dataset, write_text};
use crate::manifest::RunManifest;

pub const CHECKPOINT_FILE: &str = "model.qrnt";
pub const LOSS_FILE: &str = "loss.csv";

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for the checkpoint, loss log and manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = ["quantum", "classical"])]
    pub stem: String,
    #[arg(long)]
    pub epochs: usize,
    #[arg(long)]
    pub lr: f64,
    /// Seeds weight initialization, the split and the shuffles.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    /// Half-width of the uniform weight initialization.
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Random flips and shifts of the training images.
    #[arg(long)]
    pub augment: bool,
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("train");
    let stem: StemKind = args.stem.parse()?;
    let dataset = load_dataset(&args.data)?;

    let mut model_config = ModelConfig::new(stem, dataset.class_names.len());
    model_config.image_size = dataset.samples[0].image.width();
    model_config.class_names = dataset.class_names.clone();
    model_config.seed = args.seed;
    if let Some(scale) = args.init_scale {
        model_config.head.init_scale = scale;
    }
    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed: args.seed,
        augment: args.augment,
        ..TrainConfig::default()
    };
    let mut model = Model::init(model_config.clone())?;
    crate::files::check_compatible(&model, &dataset, "model")?;

    create_dir(&args.out)?;
    let mut records = FitLog::default();
    let result = fit_with(&mut model, &dataset.samples, &train_config, |r| {
        eprintln!(
            "epoch {:>3} {:<5} loss {:.6} accuracy {:.4}",
            r.epoch, r.split, r.loss, r.accuracy
        );
        records.records.push(*r);
    });
    // The log is kept even when training stops early.
    let loss_file = write_text(&args.out, LOSS_FILE, &records.to_csv())?;
    if let Err(e) = result {
        return Err(CliError::from(e));
    }
    let checkpoint = args.out.join(CHECKPOINT_FILE);
    save_checkpoint(&model, &checkpoint)?;

    manifest.config = json!({ "model": model_config, "train": train_config });
    manifest.seeds = json!({ "train": args.seed });
    manifest.inputs = json!({ "data": args.data });
    manifest.outputs = vec![loss_file, CHECKPOINT_FILE.to_owned()];
    manifest.write(&args.out)
}
