use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use qretina::data::{Dataset, Sample};
use qretina::metrics::EvalReport;
use qretina::train::{evaluate, split_indices, Model};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::files::{check_compatible, create_dir, load_dataset, load_model, write_text};
use crate::manifest::RunManifest;
use crate::svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    /// Every image in the dataset.
    All,
    /// The training portion of the checkpoint's own split.
    Train,
    /// The held-out portion of the checkpoint's own split.
    Eval,
}

impl SplitArg {
    fn name(self) -> &'static str {
        match self {
            SplitArg::All => "all",
            SplitArg::Train => "train",
            SplitArg::Eval => "eval",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Comma-separated checkpoint paths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
}

/// Images of `dataset` selected by `split`, using the partition the model
/// was trained with.
fn select(model: &Model, dataset: &Dataset, split: SplitArg, label: &str) -> CliResult<Vec<Sample>> {
    if split == SplitArg::All {
        return Ok(dataset.samples.clone());
    }
    let cfg = model.trained_with.as_ref().ok_or_else(|| {
        CliError::Usage(format!("{label} records no training split; use --split all"))
    })?;
    let (train, held_out) =
        split_indices(dataset.samples.len(), cfg.holdout_fraction, cfg.seed);
    let picked = if split == SplitArg::Train { train } else { held_out };
    Ok(picked.into_iter().map(|i| dataset.samples[i].clone()).collect())
}

fn score(model: &Model, dataset: &Dataset, split: SplitArg, label: &str) -> CliResult<EvalReport> {
    check_compatible(model, dataset, label)?;
    let samples = select(model, dataset, split, label)?;
    let postprocess = model.trained_with.map(|t| t.postprocess).unwrap_or_default();
    Ok(evaluate(model, &samples, &model.config.class_names, &postprocess)?)
}

fn confusion_csv(report: &EvalReport) -> String {
    let mut out = String::from("predicted");
    for name in &report.class_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (name, row) in report.class_names.iter().zip(&report.confusion.counts) {
        out.push_str(name);
        for c in row {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}

fn roc_csv(report: &EvalReport, class: usize) -> String {
    let mut out = String::from("fpr,tpr,threshold\n");
    if let Some(curve) = &report.roc[class] {
        for (i, (fpr, tpr)) in curve.points.iter().enumerate() {
            let threshold = match i {
                0 => "inf".to_owned(),
                _ => curve.thresholds[i - 1].to_string(),
            };
            out.push_str(&format!("{fpr},{tpr},{threshold}\n"));
        }
    }
    out
}

/// Writes the JSON report, CSV tables and SVG figures; returns the file names.
pub fn write_report(dir: &Path, report: &EvalReport, label: &str) -> CliResult<Vec<String>> {
    create_dir(dir)?;
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    let mut files = vec![
        write_text(dir, "report.json", &json)?,
        write_text(dir, "confusion.csv", &confusion_csv(report))?,
    ];
    for (c, name) in report.class_names.iter().enumerate() {
        files.push(write_text(dir, &format!("roc_{name}.csv"), &roc_csv(report, c))?);
    }

    let names = &report.class_names;
    files.push(write_text(
        dir,
        "confusion.svg",
        &svg::heatmap(&format!("{label}: confusion"), names, &report.confusion.counts),
    )?);
    let curves: Vec<(String, Vec<(f64, f64)>)> = names
        .iter()
        .zip(report.roc.iter().zip(&report.auc))
        .filter_map(|(n, (curve, area))| {
            Some((format!("{n} ({:.3})", (*area)?), curve.as_ref()?.points.clone()))
        })
        .collect();
    files.push(write_text(dir, "roc.svg", &svg::roc_chart(&format!("{label}: ROC"), &curves))?);
    let pick = |f: fn(&qretina::metrics::ClassScores) -> f64| -> Vec<f64> {
        report.per_class.iter().map(f).collect()
    };
    files.push(write_text(
        dir,
        "f1.svg",
        &svg::bar_chart(
            &format!("{label}: per-class scores"),
            names,
            &[
                ("precision", pick(|s| s.precision)),
                ("recall", pick(|s| s.recall)),
                ("F1", pick(|s| s.f1)),
            ],
        ),
    )?);
    files.push(write_text(
        dir,
        "accuracy.svg",
        &svg::bar_chart(
            &format!("{label}: accuracy"),
            &[label.to_owned()],
            &[
                ("accuracy", vec![report.accuracy]),
                ("detection rate", vec![report.detection_rate()]),
            ],
        ),
    )?);
    Ok(files)
}

pub fn run_eval(args: &EvalArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("eval");
    let model = load_model(&args.model)?;
    let dataset = load_dataset(&args.data)?;
    let report = score(&model, &dataset, args.split, "model")?;
    let label = model.config.stem.to_string();
    manifest.outputs = write_report(&args.out, &report, &label)?;
    eprintln!(
        "{} objects, {} missed, accuracy {:.4}, macro-F1 {:.4}",
        report.objects, report.missed, report.accuracy, report.macro_f1
    );
    manifest.config = json!({ "split": args.split.name(), "model": model.config });
    manifest.seeds = json!({ "train": model.trained_with.map(|t| t.seed) });
    manifest.inputs = json!({ "model": args.model, "data": args.data });
    manifest.write(&args.out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run_compare(args: &CompareArgs) -> CliResult<()> {
    let mut manifest = RunManifest::start("compare");
    let dataset = load_dataset(&args.data)?;
    let models = args
        .models
        .iter()
        .map(|p| load_model(p))
        .collect::<CliResult<Vec<_>>>()?;
    for (i, model) in models.iter().enumerate() {
        check_compatible(model, &dataset, &format!("model {}", args.models[i].display()))?;
    }
    create_dir(&args.out)?;

    let mut csv = String::from("model,path,stem,accuracy,macro_f1,mean_auc,detection_rate\n");
    let mut labels = Vec::new();
    let (mut acc, mut f1, mut auc) = (Vec::new(), Vec::new(), Vec::new());
    for (i, (model, path)) in models.iter().zip(&args.models).enumerate() {
        let id = format!("model{i}");
        let report = score(model, &dataset, args.split, &id)?;
        let label = format!("{id} ({})", model.config.stem);
        for f in write_report(&args.out.join(&id), &report, &label)? {
            manifest.outputs.push(format!("{id}/{f}"));
        }
        csv.push_str(&format!(
            "{id},{},{},{},{},{},{}\n",
            path.display(),
            model.config.stem,
            report.accuracy,
            report.macro_f1,
            opt(report.mean_auc()),
            report.detection_rate()
        ));
        acc.push(report.accuracy);
        f1.push(report.macro_f1);
        auc.push(report.mean_auc().unwrap_or(0.0));
        labels.push(label);
    }
    manifest.outputs.push(write_text(&args.out, "compare.csv", &csv)?);
    manifest.outputs.push(write_text(
        &args.out,
        "compare.svg",
        &svg::bar_chart(
            "model comparison",
            &labels,
            &[("accuracy", acc), ("macro-F1", f1), ("mean AUC", auc)],
        ),
    )?);
    print!("{csv}");

    manifest.config = json!({ "split": args.split.name() });
    manifest.seeds = json!({
        "train": models.iter().map(|m| m.trained_with.map(|t| t.seed)).collect::<Vec<_>>()
    });
    manifest.inputs = json!({ "models": args.models, "data": args.data });
    manifest.write(&args.out)
}
