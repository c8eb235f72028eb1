//! On-disk dataset layout:
//!
//! ```text
//! images/00000.pgm ...
//! annotations.jsonl   {"file":"00000.pgm","objects":[{"box":[x0,y0,x1,y1],"class":0}]}
//! classes.txt         one label per line, index order
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pgm::{load_pgm, save_pgm};
use super::{normalize, to_raster, Sample};
use crate::detector::{BBox, Truth};
use crate::error::{Error, Result};

pub const IMAGES_DIR: &str = "images";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const CLASSES_FILE: &str = "classes.txt";

#[derive(Debug, Serialize, Deserialize)]
struct ObjectRecord {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    class: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ImageRecord {
    file: String,
    objects: Vec<ObjectRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub files: Vec<String>,
    pub samples: Vec<Sample>,
}

pub fn write_dataset(dir: &Path, samples: &[Sample], class_names: &[&str]) -> Result<()> {
    let images = dir.join(IMAGES_DIR);
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut annotations = Vec::new();
    for (i, sample) in samples.iter().enumerate() {
        let file = format!("{i:05}.pgm");
        save_pgm(&to_raster(&sample.image), images.join(&file))?;
        let record = ImageRecord {
            file,
            objects: sample
                .truths
                .iter()
                .map(|t| ObjectRecord {
                    bbox: t.bbox.to_array(),
                    class: t.class_index,
                })
                .collect(),
        };
        serde_json::to_writer(&mut annotations, &record)?;
        annotations.push(b'\n');
    }
    let path = dir.join(ANNOTATIONS_FILE);
    fs::write(&path, annotations).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(CLASSES_FILE);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    for name in class_names {
        writeln!(f, "{name}").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(CLASSES_FILE);
    let classes = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let class_names: Vec<String> = classes
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if class_names.is_empty() {
        return Err(Error::Format {
            offset: 0,
            message: format!("{} lists no classes", path.display()),
        });
    }
    let path = dir.join(ANNOTATIONS_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut files = Vec::new();
    let mut samples = Vec::new();
    let mut offset = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        let line_len = line.len() + 1;
        if line.trim().is_empty() {
            offset += line_len;
            continue;
        }
        let record: ImageRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            offset,
            message: format!("{}: {e}", path.display()),
        })?;
        let image = normalize(&load_pgm(dir.join(IMAGES_DIR).join(&record.file))?)?;
        let mut truths = Vec::with_capacity(record.objects.len());
        for o in record.objects {
            let [x0, y0, x1, y1] = o.bbox;
            let bbox = BBox::new(x0, y0, x1, y1);
            let inside = bbox.is_valid()
                && x0 >= 0.0
                && y0 >= 0.0
                && x1 <= image.width() as f64
                && y1 <= image.height() as f64;
            if !inside || o.class >= class_names.len() {
                return Err(Error::Format {
                    offset,
                    message: format!("{}: invalid object in {}", path.display(), record.file),
                });
            }
            truths.push(Truth {
                bbox,
                class_index: o.class,
            });
        }
        files.push(record.file);
        samples.push(Sample { image, truths });
        offset += line_len;
    }
    Ok(Dataset {
        class_names,
        files,
        samples,
    })
}
