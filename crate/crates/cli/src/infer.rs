use std::path::PathBuf;

use clap::Args;
use qretina::data::normalize;
use qretina::data::pgm::{load_pgm, save_pgm, GrayImage};
use qretina::detector::{BBox, Detection};
use qretina::train::detect;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::files::load_model;

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Binary PGM image at the model's resolution.
    #[arg(long)]
    pub image: PathBuf,
    /// Write a copy of the image with the boxes drawn in.
    #[arg(long, value_name = "OUT.pgm")]
    pub annotate: Option<PathBuf>,
    /// Print a JSON array instead of text lines.
    #[arg(long)]
    pub json: bool,
}

/// Outline of `b` at full intensity, on the pixels it covers.
fn draw_box(image: &mut GrayImage, b: &BBox) {
    if image.width == 0 || image.height == 0 {
        return;
    }
    let px = |v: f64, hi: usize| (v.max(0.0) as usize).min(hi - 1);
    let (x0, y0) = (px(b.x_min.floor(), image.width), px(b.y_min.floor(), image.height));
    let (x1, y1) = (
        px(b.x_max.ceil() - 1.0, image.width),
        px(b.y_max.ceil() - 1.0, image.height),
    );
    let w = image.width;
    for x in x0..=x1.max(x0) {
        image.pixels[y0 * w + x] = u8::MAX;
        image.pixels[y1 * w + x] = u8::MAX;
    }
    for y in y0..=y1.max(y0) {
        image.pixels[y * w + x0] = u8::MAX;
        image.pixels[y * w + x1] = u8::MAX;
    }
}

pub fn run(args: &InferArgs) -> CliResult<()> {
    let model = load_model(&args.model)?;
    let raster = load_pgm(&args.image)?;
    let size = model.config.image_size;
    if raster.width != size || raster.height != size {
        return Err(CliError::Incompatible(format!(
            "model expects {size}×{size} images, {} is {}×{}",
            args.image.display(),
            raster.width,
            raster.height
        )));
    }
    let postprocess = model.trained_with.map(|t| t.postprocess).unwrap_or_default();
    let detections: Vec<Detection> = detect(&model, &normalize(&raster)?, &postprocess)?;
    let names = &model.config.class_names;

    if args.json {
        let items: Vec<_> = detections
            .iter()
            .map(|d| {
                json!({
                    "class": names[d.class_index],
                    "class_index": d.class_index,
                    "score": d.score,
                    "box": d.bbox.to_array(),
                })
            })
            .collect();
        println!("{}", serde_json::to_string(&items)?);
    } else {
        for d in &detections {
            let b = &d.bbox;
            println!(
                "{} {:.4} {:.2} {:.2} {:.2} {:.2}",
                names[d.class_index], d.score, b.x_min, b.y_min, b.x_max, b.y_max
            );
        }
    }

    if let Some(out) = &args.annotate {
        let mut annotated = raster.clone();
        for d in &detections {
            draw_box(&mut annotated, &d.bbox);
        }
        save_pgm(&annotated, out)?;
    }
    Ok(())
}
