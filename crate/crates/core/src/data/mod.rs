//! Seeded synthetic stand-in for the weapon dataset: one parametric glyph
//! per class, tight box labels, 8-bit grayscale rasters.

mod layout;
pub mod pgm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{BBox, Truth};
use crate::error::{Error, Result};
use crate::tensor::FeatureTensor;
pub use layout::{read_dataset, write_dataset, Dataset, ANNOTATIONS_FILE, CLASSES_FILE, IMAGES_DIR};
use pgm::GrayImage;

pub const N_CLASSES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// One channel, values in `[0, 1]`.
    pub image: FeatureTensor,
    pub truths: Vec<Truth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub image_size: usize,
    pub samples_per_class: usize,
    pub seed: u64,
    pub noise_level: f64,
    /// Adds a second, non-overlapping glyph when it fits.
    pub multi_object: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            samples_per_class: 40,
            seed: 1,
            noise_level: 0.05,
            multi_object: false,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || !self.image_size.is_multiple_of(4) {
            return Err(Error::arg(format!(
                "image size {} must be a positive multiple of 4",
                self.image_size
            )));
        }
        if !(0.0..=0.2).contains(&self.noise_level) {
            return Err(Error::arg(format!(
                "noise level {} outside [0, 0.2]",
                self.noise_level
            )));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer; spreads `(base, index)` into an independent seed.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Filled pixels of a glyph in its canonical (horizontal) pose.
struct Mask {
    width: usize,
    height: usize,
    filled: Vec<bool>,
}

impl Mask {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            filled: vec![false; width * height],
        }
    }

    fn fill_rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize) {
        for y in y0..y1.min(self.height) {
            for x in x0..x1.min(self.width) {
                self.filled[y * self.width + x] = true;
            }
        }
    }

    fn get(&self, x: usize, y: usize) -> bool {
        self.filled[y * self.width + x]
    }

    /// Rotates by `quarter_turns × 90°` clockwise.
    fn rotated(&self, quarter_turns: u8) -> Mask {
        let mut m = self.clone_shape(quarter_turns);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                let (nx, ny) = match quarter_turns % 4 {
                    0 => (x, y),
                    1 => (self.height - 1 - y, x),
                    2 => (self.width - 1 - x, self.height - 1 - y),
                    _ => (y, self.width - 1 - x),
                };
                m.filled[ny * m.width + nx] = true;
            }
        }
        m
    }

    fn clone_shape(&self, quarter_turns: u8) -> Mask {
        if quarter_turns.is_multiple_of(2) {
            Mask::new(self.width, self.height)
        } else {
            Mask::new(self.height, self.width)
        }
    }

    fn count(&self) -> usize {
        self.filled.iter().filter(|&&f| f).count()
    }
}

fn scaled(length: usize, fraction: f64) -> usize {
    ((length as f64 * fraction).round() as usize).max(1)
}

/// Canonical glyph for `class` with long side `length`.
fn glyph(class: usize, length: usize) -> Mask {
    let l = length;
    match class {
        // rifle: long thin barrel along the top, short stock hanging at the back
        0 => {
            let mut m = Mask::new(l, scaled(l, 0.4));
            let h = m.height;
            m.fill_rect(0, 0, l, scaled(l, 0.1));
            m.fill_rect(l - scaled(l, 0.2), 0, l, h);
            m
        }
        // shotgun: thick barrel centred on a wide muzzle block at the front
        1 => {
            let mut m = Mask::new(l, scaled(l, 0.55));
            let h = m.height;
            let bar = scaled(l, 0.25);
            let top = (h - bar.min(h)) / 2;
            m.fill_rect(0, top, l, top + bar);
            m.fill_rect(0, 0, scaled(l, 0.2), h);
            m
        }
        // pistol: barrel plus a tall grip, a chunky L
        2 => {
            let mut m = Mask::new(l, scaled(l, 0.85));
            let h = m.height;
            m.fill_rect(0, 0, l, scaled(l, 0.3));
            m.fill_rect(l - scaled(l, 0.4), 0, l, h);
            m
        }
        // knife: thin isosceles blade tapering to a point
        _ => {
            let h = scaled(l, 0.3);
            let mut m = Mask::new(l, h);
            let half = h as f64 / 2.0;
            for x in 0..l {
                let reach = (half * (1.0 - x as f64 / l as f64)).max(0.5);
                for y in 0..h {
                    if (y as f64 + 0.5 - half).abs() <= reach {
                        m.filled[y * l + x] = true;
                    }
                }
            }
            m
        }
    }
}

/// Tight bounds of the filled pixels as `(x0, y0, x1, y1)`, exclusive max.
fn mask_bounds(m: &Mask) -> (usize, usize, usize, usize) {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..m.height {
        for x in 0..m.width {
            if m.get(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    (x0, y0, x1, y1)
}

struct Placed {
    bbox: BBox,
    class: usize,
    pixels: Vec<(usize, usize)>,
    intensity: f64,
}

fn place_glyph<R: Rng>(
    class: usize,
    size: usize,
    scale_range: (f64, f64),
    rng: &mut R,
) -> Placed {
    let length = (rng.gen_range(scale_range.0..=scale_range.1) * size as f64).round() as usize;
    let length = length.clamp(4, size);
    let mask = glyph(class, length).rotated(rng.gen_range(0..4u8));
    let (bx0, by0, bx1, by1) = mask_bounds(&mask);
    let (gw, gh) = (bx1 - bx0, by1 - by0);
    let ox = rng.gen_range(0..=size - gw);
    let oy = rng.gen_range(0..=size - gh);
    let intensity = rng.gen_range(0.6..=1.0);
    let mut pixels = Vec::with_capacity(mask.count());
    for y in by0..by1 {
        for x in bx0..bx1 {
            if mask.get(x, y) {
                pixels.push((ox + x - bx0, oy + y - by0));
            }
        }
    }
    Placed {
        bbox: BBox::new(ox as f64, oy as f64, (ox + gw) as f64, (oy + gh) as f64),
        class,
        pixels,
        intensity,
    }
}

fn overlaps_with_margin(a: &BBox, b: &BBox, margin: f64) -> bool {
    a.x_min < b.x_max + margin
        && b.x_min < a.x_max + margin
        && a.y_min < b.y_max + margin
        && b.y_min < a.y_max + margin
}

fn render_sample(config: &DatasetConfig, index: usize) -> (GrayImage, Vec<Truth>) {
    let size = config.image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, index as u64));
    let class = index % N_CLASSES;
    let mut placed = vec![place_glyph(class, size, (0.3, 0.7), &mut rng)];
    if config.multi_object {
        let second = rng.gen_range(0..N_CLASSES);
        for _ in 0..20 {
            let candidate = place_glyph(second, size, (0.3, 0.5), &mut rng);
            if !overlaps_with_margin(&candidate.bbox, &placed[0].bbox, 1.0) {
                placed.push(candidate);
                break;
            }
        }
    }
    let mut values = vec![0.0f64; size * size];
    for g in &placed {
        for &(x, y) in &g.pixels {
            values[y * size + x] = g.intensity;
        }
    }
    if config.noise_level > 0.0 {
        for v in &mut values {
            *v = (*v + rng.gen_range(0.0..config.noise_level)).min(1.0);
        }
    }
    let pixels = values.iter().map(|v| (v * 255.0).round() as u8).collect();
    let truths = placed
        .iter()
        .map(|g| Truth {
            bbox: g.bbox,
            class_index: g.class,
        })
        .collect();
    (
        GrayImage::new(size, size, pixels).expect("square raster"),
        truths,
    )
}

/// Sample `i` carries class `i mod 4`; everything is a pure function of
/// `(config.seed, i)`.
pub fn generate(config: &DatasetConfig) -> Result<Vec<Sample>> {
    config.validate()?;
    (0..config.samples_per_class * N_CLASSES)
        .map(|i| {
            let (raster, truths) = render_sample(config, i);
            Ok(Sample {
                image: normalize(&raster)?,
                truths,
            })
        })
        .collect()
}

/// Noise-free rendering of sample `index`, for auditing labels.
pub fn render_clean(config: &DatasetConfig, index: usize) -> (GrayImage, Vec<Truth>) {
    let clean = DatasetConfig {
        noise_level: 0.0,
        ..config.clone()
    };
    render_sample(&clean, index)
}

/// `value / 255`, exactly.
pub fn normalize(image: &GrayImage) -> Result<FeatureTensor> {
    FeatureTensor::from_values(
        1,
        image.height,
        image.width,
        image.pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
    )
}

/// Inverse of [`normalize`] for values on the `k/255` grid.
pub fn to_raster(image: &FeatureTensor) -> GrayImage {
    GrayImage {
        width: image.width(),
        height: image.height(),
        pixels: image
            .channel(0)
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentParams {
    pub flip: bool,
    pub dx: i64,
    pub dy: i64,
}

/// Largest allowed translation in each direction.
pub const MAX_SHIFT: i64 = 2;

/// Random horizontal flip (p = 0.5) and translation of up to ±2 px, limited
/// so every box stays inside the image.
pub fn augment(sample: &Sample, rng_seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let params = AugmentParams {
        flip: rng.gen_bool(0.5),
        dx: rng.gen_range(-MAX_SHIFT..=MAX_SHIFT),
        dy: rng.gen_range(-MAX_SHIFT..=MAX_SHIFT),
    };
    apply_augment(sample, params)
}

pub fn apply_augment(sample: &Sample, params: AugmentParams) -> Sample {
    let mut out = if params.flip {
        flip_horizontal(sample)
    } else {
        sample.clone()
    };
    let (h, w) = (out.image.height() as f64, out.image.width() as f64);
    let clamp_shift = |d: i64, lo: f64, hi: f64| -> i64 {
        // lo = most negative shift allowed, hi = most positive
        (d as f64).clamp(lo.min(0.0), hi.max(0.0)) as i64
    };
    let min_x = out.truths.iter().map(|t| t.bbox.x_min).fold(w, f64::min);
    let max_x = out.truths.iter().map(|t| t.bbox.x_max).fold(0.0, f64::max);
    let min_y = out.truths.iter().map(|t| t.bbox.y_min).fold(h, f64::min);
    let max_y = out.truths.iter().map(|t| t.bbox.y_max).fold(0.0, f64::max);
    let dx = clamp_shift(params.dx, -min_x.floor(), (w - max_x).floor());
    let dy = clamp_shift(params.dy, -min_y.floor(), (h - max_y).floor());
    if dx != 0 || dy != 0 {
        out = translate(&out, dx, dy);
    }
    out
}

pub fn flip_horizontal(sample: &Sample) -> Sample {
    let (_, h, w) = sample.image.shape();
    let mut image = FeatureTensor::zeros(1, h, w);
    for y in 0..h {
        for x in 0..w {
            image.set(0, y, x, sample.image.get(0, y, w - 1 - x));
        }
    }
    let wf = w as f64;
    let truths = sample
        .truths
        .iter()
        .map(|t| Truth {
            bbox: BBox::new(wf - t.bbox.x_max, t.bbox.y_min, wf - t.bbox.x_min, t.bbox.y_max),
            class_index: t.class_index,
        })
        .collect();
    Sample { image, truths }
}

/// Shifts content by `(dx, dy)`; vacated pixels become 0.
pub fn translate(sample: &Sample, dx: i64, dy: i64) -> Sample {
    let (_, h, w) = sample.image.shape();
    let mut image = FeatureTensor::zeros(1, h, w);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (sx, sy) = (x - dx, y - dy);
            if sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64 {
                image.set(0, y as usize, x as usize, sample.image.get(0, sy as usize, sx as usize));
            }
        }
    }
    let (fx, fy) = (dx as f64, dy as f64);
    let truths = sample
        .truths
        .iter()
        .map(|t| Truth {
            bbox: BBox::new(t.bbox.x_min + fx, t.bbox.y_min + fy, t.bbox.x_max + fx, t.bbox.y_max + fy),
            class_index: t.class_index,
        })
        .collect();
    Sample { image, truths }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(per_class: usize, noise: f64) -> DatasetConfig {
        DatasetConfig {
            image_size: 32,
            samples_per_class: per_class,
            seed: 7,
            noise_level: noise,
            multi_object: false,
        }
    }

    #[test]
    fn class_histogram_and_determinism() {
        let a = generate(&small(5, 0.05)).unwrap();
        assert_eq!(a.len(), 20);
        let mut hist = [0; 4];
        for s in &a {
            hist[s.truths[0].class_index] += 1;
        }
        assert_eq!(hist, [5, 5, 5, 5]);
        let b = generate(&small(5, 0.05)).unwrap();
        assert_eq!(a, b);
        let c = generate(&DatasetConfig { seed: 8, ..small(5, 0.05) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_free_background_is_zero() {
        for s in generate(&small(5, 0.0)).unwrap() {
            let b = s.truths[0].bbox;
            for y in 0..32 {
                for x in 0..32 {
                    let inside = (x as f64) >= b.x_min
                        && (x as f64) < b.x_max
                        && (y as f64) >= b.y_min
                        && (y as f64) < b.y_max;
                    if !inside {
                        assert_eq!(s.image.get(0, y, x), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn normalize_examples() {
        let img = GrayImage::new(3, 1, vec![255, 0, 128]).unwrap();
        let t = normalize(&img).unwrap();
        assert_eq!(t.values(), &[1.0, 0.0, 128.0 / 255.0]);
        assert!((t.values()[2] - 0.50196).abs() < 1e-5);
        assert_eq!(to_raster(&t), img);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate(&DatasetConfig { image_size: 30, ..small(1, 0.0) }).is_err());
        assert!(generate(&DatasetConfig { noise_level: 0.3, ..small(1, 0.0) }).is_err());
    }

    #[test]
    fn flip_is_an_involution() {
        let s = &generate(&small(2, 0.1)).unwrap()[3];
        let forced = AugmentParams { flip: true, dx: 0, dy: 0 };
        let twice = apply_augment(&apply_augment(s, forced), forced);
        assert_eq!(&twice, s);
    }

    #[test]
    fn translation_moves_boxes() {
        // place a small glyph away from the right edge
        let mut image = FeatureTensor::zeros(1, 32, 32);
        image.set(0, 10, 10, 1.0);
        let s = Sample {
            image,
            truths: vec![Truth { bbox: BBox::new(10.0, 10.0, 11.0, 11.0), class_index: 0 }],
        };
        let moved = apply_augment(&s, AugmentParams { flip: false, dx: 2, dy: 0 });
        assert_eq!(moved.truths[0].bbox, BBox::new(12.0, 10.0, 13.0, 11.0));
        assert_eq!(moved.image.get(0, 10, 12), 1.0);
        // against the edge the shift is clamped
        let edge = Sample {
            image: FeatureTensor::zeros(1, 32, 32),
            truths: vec![Truth { bbox: BBox::new(0.0, 0.0, 31.0, 5.0), class_index: 0 }],
        };
        let moved = apply_augment(&edge, AugmentParams { flip: false, dx: 2, dy: -2 });
        assert_eq!(moved.truths[0].bbox, BBox::new(1.0, 0.0, 32.0, 5.0));
    }

    #[test]
    fn multi_object_boxes_do_not_overlap() {
        let cfg = DatasetConfig { multi_object: true, ..small(10, 0.0) };
        let data = generate(&cfg).unwrap();
        assert!(data.iter().any(|s| s.truths.len() == 2));
        for s in data.iter().filter(|s| s.truths.len() == 2) {
            assert_eq!(crate::detector::iou(&s.truths[0].bbox, &s.truths[1].bbox), 0.0);
        }
    }
}
