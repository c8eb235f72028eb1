use serde::{Deserialize, Serialize};

use super::boxes::Anchor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    /// Feature stride of each pyramid level, in pixels.
    pub level_strides: Vec<usize>,
    /// Base anchor side per level, in pixels.
    pub scales: Vec<f64>,
    /// Width/height ratios tiled at every location.
    pub ratios: Vec<f64>,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            level_strides: vec![2, 4],
            scales: vec![8.0, 16.0],
            ratios: vec![1.0, 2.0, 0.5],
        }
    }
}

impl AnchorConfig {
    pub fn per_location(&self) -> usize {
        self.ratios.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub anchors: Vec<Anchor>,
    pub per_location: usize,
    /// `(rows, cols)` of each level's grid.
    pub level_dims: Vec<(usize, usize)>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Tiles anchors level by level, row-major over locations, ratios innermost.
/// An anchor at grid cell `(i, j)` is centered on `(s·(j+½), s·(i+½))` with
/// `w = scale·√ratio` and `h = scale/√ratio`.
pub fn generate_anchors(image_size: usize, config: &AnchorConfig) -> Result<AnchorSet> {
    if config.level_strides.len() != config.scales.len() {
        return Err(Error::arg("need one anchor scale per pyramid level"));
    }
    if config.ratios.is_empty() || config.ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return Err(Error::arg("anchor ratios must be positive and non-empty"));
    }
    if config.scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::arg("anchor scales must be positive"));
    }
    let mut anchors = Vec::new();
    let mut level_dims = Vec::new();
    for (&stride, &scale) in config.level_strides.iter().zip(&config.scales) {
        if stride == 0 || !image_size.is_multiple_of(stride) {
            return Err(Error::arg(format!(
                "image size {image_size} is not divisible by level stride {stride}"
            )));
        }
        let n = image_size / stride;
        level_dims.push((n, n));
        for i in 0..n {
            for j in 0..n {
                for &ratio in &config.ratios {
                    anchors.push(Anchor {
                        cx: stride as f64 * (j as f64 + 0.5),
                        cy: stride as f64 * (i as f64 + 0.5),
                        w: scale * ratio.sqrt(),
                        h: scale / ratio.sqrt(),
                    });
                }
            }
        }
    }
    Ok(AnchorSet {
        anchors,
        per_location: config.ratios.len(),
        level_dims,
    })
}
