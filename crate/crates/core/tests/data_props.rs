mod common;

use proptest::prelude::*;
use qretina::data::{
    apply_augment, augment, generate, normalize, render_clean, AugmentParams, DatasetConfig,
    MAX_SHIFT,
};
use qretina::data::pgm::{decode_pgm, encode_pgm, GrayImage};

#[test]
fn rule_classifier_separates_noise_free_glyphs() {
    let acc = common::rule_classifier_accuracy(100, 41);
    assert!(acc >= 0.95, "rule accuracy {acc}");
}

#[test]
fn truth_boxes_bound_clean_pixels_tightly() {
    for multi in [false, true] {
        let config = DatasetConfig { samples_per_class: 25, seed: 42, multi_object: multi, ..Default::default() };
        for i in 0..100 {
            let (img, truths) = render_clean(&config, i);
            let lit: Vec<(usize, usize)> = (0..img.height)
                .flat_map(|y| (0..img.width).map(move |x| (x, y)))
                .filter(|&(x, y)| img.pixels[y * img.width + x] > 0)
                .collect();
            // every lit pixel lies in some box, and every box edge touches a lit pixel
            for &(x, y) in &lit {
                assert!(truths.iter().any(|t| {
                    let b = t.bbox;
                    (x as f64) >= b.x_min && (x as f64) < b.x_max && (y as f64) >= b.y_min && (y as f64) < b.y_max
                }));
            }
            for t in &truths {
                let b = t.bbox;
                let inside: Vec<&(usize, usize)> = lit
                    .iter()
                    .filter(|&&(x, y)| (x as f64) >= b.x_min && (x as f64) < b.x_max && (y as f64) >= b.y_min && (y as f64) < b.y_max)
                    .collect();
                assert!(inside.iter().any(|p| p.0 as f64 == b.x_min));
                assert!(inside.iter().any(|p| p.0 as f64 == b.x_max - 1.0));
                assert!(inside.iter().any(|p| p.1 as f64 == b.y_min));
                assert!(inside.iter().any(|p| p.1 as f64 == b.y_max - 1.0));
            }
        }
    }
}

#[test]
fn class_histogram_and_determinism() {
    let config = DatasetConfig { samples_per_class: 5, seed: 1, ..Default::default() };
    let a = generate(&config).unwrap();
    assert_eq!(a.len(), 20);
    let mut hist = [0; 4];
    for s in &a {
        hist[s.truths[0].class_index] += 1;
    }
    assert_eq!(hist, [5, 5, 5, 5]);
    assert_eq!(a, generate(&config).unwrap());
    let other = generate(&DatasetConfig { seed: 2, ..config }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn zero_noise_leaves_background_black() {
    let config = DatasetConfig { samples_per_class: 3, noise_level: 0.0, ..Default::default() };
    for s in generate(&config).unwrap() {
        let b = s.truths[0].bbox;
        for y in 0..32 {
            for x in 0..32 {
                let outside = (x as f64) < b.x_min || (x as f64) >= b.x_max || (y as f64) < b.y_min || (y as f64) >= b.y_max;
                if outside {
                    assert_eq!(s.image.get(0, y, x), 0.0);
                }
            }
        }
    }
}

#[test]
fn augmented_boxes_stay_in_bounds() {
    let samples = generate(&DatasetConfig { samples_per_class: 10, multi_object: true, ..Default::default() }).unwrap();
    for k in 0..1000u64 {
        let s = &samples[(k % 40) as usize];
        let a = augment(s, k);
        assert_eq!(a.truths.len(), s.truths.len());
        for t in &a.truths {
            let b = t.bbox;
            assert!(b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= 32.0 && b.y_max <= 32.0);
            assert!(b.area() > 0.0);
        }
    }
}

#[test]
fn translation_moves_boxes_and_flip_is_an_involution() {
    let s = generate(&DatasetConfig { samples_per_class: 4, ..Default::default() }).unwrap();
    for sample in &s {
        let flip = AugmentParams { flip: true, dx: 0, dy: 0 };
        assert_eq!(apply_augment(&apply_augment(sample, flip), flip), *sample);
        let b = sample.truths[0].bbox;
        if b.x_max + 2.0 <= 32.0 {
            let moved = apply_augment(sample, AugmentParams { flip: false, dx: MAX_SHIFT, dy: 0 });
            let m = moved.truths[0].bbox;
            assert_eq!((m.x_min, m.x_max, m.y_min, m.y_max), (b.x_min + 2.0, b.x_max + 2.0, b.y_min, b.y_max));
        }
    }
}

proptest! {
    #[test]
    fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let pixels = (0..w * h).map(|_| rng.gen()).collect();
        let img = GrayImage::new(w, h, pixels).unwrap();
        prop_assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img.clone());
        let t = normalize(&img).unwrap();
        prop_assert!(t.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn normalization_examples() {
    let img = GrayImage::new(3, 1, vec![255, 0, 128]).unwrap();
    let t = normalize(&img).unwrap();
    assert_eq!(t.values(), &[1.0, 0.0, 128.0 / 255.0]);
}
