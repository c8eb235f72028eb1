//! Independent reference computations shared by the property suites and the
//! acceptance run. Nothing here calls the code paths it is used to check.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use qretina::data::{render_clean, DatasetConfig, Sample};
use qretina::detector::{
    box_subnet, decode_box, encode_box, focal_loss, iou, nms, Anchor, BBox, ConvActivation,
    ConvLayer, Detection, FocalParams,
};
use qretina::metrics::{auc, confusion, f1_score, per_class_prf, roc};
use qretina::qsim::{Gate, Statevector};
use qretina::quanv::{
    output_with_grad, param_shift_grad, quanv_forward, Activation, Encoding, Pooling, QuanvFilter,
    QuanvLayer,
};
use qretina::train::{batch_loss, backward, Model, ModelConfig, StemKind, TrainConfig};
use qretina::detector::Truth;
use qretina::FeatureTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- qsim

pub fn random_gate<R: Rng>(n: usize, rng: &mut R) -> Gate {
    let q = rng.gen_range(0..n);
    let theta = rng.gen_range(-2.0 * PI..2.0 * PI);
    if n == 1 {
        return match rng.gen_range(0..4) {
            0 => Gate::X(q),
            1 => Gate::H(q),
            2 => Gate::Ry(q, theta),
            _ => Gate::Rz(q, theta),
        };
    }
    let mut r = rng.gen_range(0..n - 1);
    if r >= q {
        r += 1;
    }
    match rng.gen_range(0..7) {
        0 => Gate::X(q),
        1 => Gate::H(q),
        2 => Gate::Ry(q, theta),
        3 => Gate::Rz(q, theta),
        4 => Gate::Cnot {
            control: q,
            target: r,
        },
        5 => Gate::CPhase {
            control: q,
            target: r,
            angle: theta,
        },
        _ => Gate::Swap(q, r),
    }
}

pub fn random_state<R: Rng>(n: usize, rng: &mut R) -> Statevector {
    let mut amps: Vec<Complex64> = (0..1usize << n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|a| *a /= norm);
    Statevector::from_amplitudes(amps).unwrap()
}

/// Largest |‖ψ‖² − 1| after random circuits on random product inputs.
pub fn norm_drift(circuits: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..circuits {
        let n = rng.gen_range(1..=6);
        let mut s = random_state(n, &mut rng);
        for _ in 0..rng.gen_range(1..=40) {
            s.apply(&random_gate(n, &mut rng)).unwrap();
        }
        worst = worst.max((s.norm_sqr() - 1.0).abs());
    }
    worst
}

/// Largest entry of |U†U − I| over random instances of every gate kind.
pub fn unitarity_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let m = random_gate(2, &mut rng).matrix();
        let d = m.len();
        for i in 0..d {
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += m[k][i].conj() * m[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - expect).norm());
            }
        }
    }
    worst
}

/// Direct matrix-vector DFT with `F[j][k] = e^{2πi·jk/N}/√N`.
pub fn dft(amps: &[Complex64]) -> Vec<Complex64> {
    let n = amps.len();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|j| {
            amps.iter()
                .enumerate()
                .map(|(k, a)| a * Complex64::from_polar(scale, 2.0 * PI * (j * k) as f64 / n as f64))
                .sum()
        })
        .collect()
}

/// Largest amplitude difference between the simulator QFT and the DFT, for
/// random states of 1..=`max_n` qubits.
pub fn qft_vs_dft_error(max_n: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0_f64;
    for n in 1..=max_n {
        for _ in 0..trials {
            let s = random_state(n, &mut rng);
            let expect = dft(s.amplitudes());
            let mut t = s.clone();
            t.qft(0..n).unwrap();
            for (a, b) in t.amplitudes().iter().zip(&expect) {
                worst = worst.max((a - b).norm());
            }
        }
    }
    worst
}

/// Every basis string up to `max_n` qubits: encoding then measuring must
/// return the string. Angle encoding: ⟨Z_q⟩ must equal cos(π·v_q).
/// Returns (basis mismatches, worst angle error).
pub fn encode_measure_round_trip(max_n: usize, seed: u64) -> (usize, f64) {
    let mut mismatches = 0;
    for n in 1..=max_n {
        for code in 0..1usize << n {
            let bits: Vec<u8> = (0..n).map(|q| (code >> (n - 1 - q) & 1) as u8).collect();
            let s = Statevector::from_bits(&bits).unwrap();
            let text: String = bits.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect();
            if s.sample_bits(seed ^ code as u64) != text {
                mismatches += 1;
            }
        }
    }
    let mut rng = rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let s = Statevector::from_angles(&v).unwrap();
        for (q, &x) in v.iter().enumerate() {
            worst = worst.max((s.expectation_z(q).unwrap() - (PI * x).cos()).abs());
        }
    }
    (mismatches, worst)
}

// ---------------------------------------------------------------- quanv

pub const POOLINGS: [Pooling; 5] = [
    Pooling::Expectation,
    Pooling::Amplitude,
    Pooling::Max,
    Pooling::Mean,
    Pooling::Median,
];

pub const ACTIVATIONS: [Activation; 4] = [
    Activation::None,
    Activation::QRelu,
    Activation::QSigmoid,
    Activation::QSoftmax,
];

fn random_layer<R: Rng>(rng: &mut R, pooling: Pooling, activation: Activation) -> QuanvLayer {
    let patch = rng.gen_range(1..=2);
    let n = patch * patch;
    let layers = rng.gen_range(1..=2);
    let filter = QuanvFilter::random(n, layers, rng).unwrap();
    QuanvLayer::new(patch, patch, vec![filter], Encoding::Angle, pooling, activation).unwrap()
}

fn central_difference(patch: &[f64], layer: &QuanvLayer, p: usize, h: f64) -> f64 {
    let mut plus = layer.clone();
    plus.filters[0].params_mut()[p] += h;
    let mut minus = layer.clone();
    minus.filters[0].params_mut()[p] -= h;
    (quanv_forward(patch, &plus, 0).unwrap() - quanv_forward(patch, &minus, 0).unwrap()) / (2.0 * h)
}

/// Parameter shift against central differences (h = 1e-4) of the scalar
/// output, pooling modes cycled across draws, no activation. Returns the
/// largest absolute error and the number of parameters compared.
pub fn param_shift_audit(draws: usize, seed: u64) -> (f64, usize) {
    let mut rng = rng(seed);
    let mut worst = 0.0_f64;
    let mut compared = 0;
    for d in 0..draws {
        let layer = random_layer(&mut rng, POOLINGS[d % POOLINGS.len()], Activation::None);
        let patch: Vec<f64> = (0..layer.n_qubits()).map(|_| rng.gen_range(0.0..=1.0)).collect();
        for p in 0..layer.filters[0].params().len() {
            let shift = param_shift_grad(&patch, &layer, 0, p).unwrap();
            let fd = central_difference(&patch, &layer, p, 1e-4);
            worst = worst.max((shift - fd).abs());
            compared += 1;
        }
    }
    (worst, compared)
}

/// Same audit for the activation-chained gradient used in training.
pub fn chained_grad_audit(draws: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0_f64;
    for d in 0..draws {
        let pooling = POOLINGS[d % POOLINGS.len()];
        let activation = ACTIVATIONS[(d / POOLINGS.len()) % ACTIVATIONS.len()];
        let layer = random_layer(&mut rng, pooling, activation);
        let patch: Vec<f64> = (0..layer.n_qubits()).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let (value, grad) = output_with_grad(&patch, &layer, 0).unwrap();
        assert_eq!(value, quanv_forward(&patch, &layer, 0).unwrap());
        for (p, g) in grad.iter().enumerate() {
            worst = worst.max((g - central_difference(&patch, &layer, p, 1e-4)).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------- model

/// Relative error with a floor on the denominator so that vanishing
/// gradients are compared absolutely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn micro_samples(model: &Model, count: usize, seed: u64) -> Vec<Sample> {
    let n = model.config.image_size;
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let values = (0..n * n).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let x0 = rng.gen_range(0..n / 2) as f64;
            let y0 = rng.gen_range(0..n / 2) as f64;
            let w = rng.gen_range(3..=n / 2) as f64;
            let h = rng.gen_range(3..=n / 2) as f64;
            Sample {
                image: FeatureTensor::from_values(1, n, n, values).unwrap(),
                truths: vec![Truth {
                    bbox: BBox::new(x0, y0, x0 + w, y0 + h),
                    class_index: rng.gen_range(0..model.n_classes()),
                }],
            }
        })
        .collect()
}

/// Full-model central differences (h = 1e-4) on the micro configuration
/// against the analytic batch gradient. Returns the worst relative error
/// and the parameter count.
/// Full-model audit: analytic batch gradient against central differences
/// (h = 1e-4) of the batch loss. ReLU and smooth-L1 kinks make the
/// difference quotient meaningless when a perturbation straddles one; such
/// coordinates are recognised by the quotient at h/2 disagreeing with the one
/// at h and are counted instead of compared.
pub struct FdAudit {
    pub worst: f64,
    pub compared: usize,
    pub skipped: usize,
}

pub fn model_fd_audit(stem: StemKind, seed: u64) -> FdAudit {
    let mut config = ModelConfig::micro(stem);
    config.seed = seed;
    let model = Model::init(config).unwrap();
    let samples = micro_samples(&model, 2, seed);
    let refs: Vec<&Sample> = samples.iter().collect();
    let cfg = TrainConfig::default();
    let analytic = backward(&model, &refs, &[0, 1], &cfg).unwrap();
    let flat: Vec<f64> = analytic
        .grad
        .tensors()
        .into_iter()
        .flat_map(|(_, t)| t.to_vec())
        .collect();
    let quotient = |t: usize, i: usize, h: f64| {
        let mut plus = model.clone();
        plus.weights.tensors_mut()[t][i] += h;
        let mut minus = model.clone();
        minus.weights.tensors_mut()[t][i] -= h;
        (batch_loss(&plus, &refs, &cfg).unwrap() - batch_loss(&minus, &refs, &cfg).unwrap())
            / (2.0 * h)
    };
    let h = 1e-4;
    let mut audit = FdAudit { worst: 0.0, compared: 0, skipped: 0 };
    let mut k = 0;
    let n_tensors = model.weights.tensors().len();
    for t in 0..n_tensors {
        let len = model.weights.tensors()[t].1.len();
        for i in 0..len {
            let fd = quotient(t, i, h);
            if relative_error(fd, quotient(t, i, h / 2.0)) > 1e-4 {
                audit.skipped += 1;
            } else {
                audit.worst = audit.worst.max(relative_error(flat[k], fd));
                audit.compared += 1;
            }
            k += 1;
        }
    }
    audit
}

// ---------------------------------------------------------------- detector

/// |focal(γ=0) − α-weighted cross-entropy| over a score grid.
pub fn focal_gamma_zero_error() -> f64 {
    let params = FocalParams {
        alpha: 0.25,
        gamma: 0.0,
    };
    let mut worst = 0.0_f64;
    for i in 1..100 {
        let p = i as f64 / 100.0;
        let pos = -0.25 * p.ln();
        let neg = -0.75 * (1.0 - p).ln();
        worst = worst.max((focal_loss(p, true, params) - pos).abs());
        worst = worst.max((focal_loss(p, false, params) - neg).abs());
    }
    worst
}

pub fn focal_worked_value_error() -> f64 {
    let expect = 0.25 * 0.25 * 2f64.ln();
    (focal_loss(0.5, true, FocalParams::default()) - expect).abs()
}

pub fn random_box<R: Rng>(rng: &mut R) -> BBox {
    let x0 = rng.gen_range(0.0..28.0);
    let y0 = rng.gen_range(0.0..28.0);
    BBox::new(x0, y0, x0 + rng.gen_range(0.5..20.0), y0 + rng.gen_range(0.5..20.0))
}

/// Largest coordinate error of decode(encode(b)) over random pairs whose
/// log scale stays inside the clamp.
pub fn box_round_trip_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..2000 {
        let b = random_box(&mut rng);
        let a = Anchor {
            cx: rng.gen_range(0.0..32.0),
            cy: rng.gen_range(0.0..32.0),
            w: rng.gen_range(2.0..24.0),
            h: rng.gen_range(2.0..24.0),
        };
        let back = decode_box(&a, encode_box(&a, &b));
        for (x, y) in back.to_array().iter().zip(b.to_array()) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

/// Counts violations of IoU symmetry, range and self-overlap, and of the
/// NMS contract (subset, per-class separation, score order, floor).
pub fn iou_nms_violations(seed: u64) -> usize {
    let mut rng = rng(seed);
    let mut bad = 0;
    for _ in 0..500 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let v = iou(&a, &b);
        if (v - iou(&b, &a)).abs() > 1e-15 || !(0.0..=1.0).contains(&v) {
            bad += 1;
        }
        if (iou(&a, &a) - 1.0).abs() > 1e-12 {
            bad += 1;
        }
    }
    for _ in 0..200 {
        let dets: Vec<Detection> = (0..rng.gen_range(0..30))
            .map(|_| Detection {
                bbox: random_box(&mut rng),
                class_index: rng.gen_range(0..3),
                score: rng.gen_range(0.0..1.0),
            })
            .collect();
        let kept = nms(&dets, 0.5, 0.05);
        for (i, k) in kept.iter().enumerate() {
            if !dets.contains(k) || k.score < 0.05 {
                bad += 1;
            }
            for other in &kept[i + 1..] {
                if other.class_index == k.class_index && iou(&k.bbox, &other.bbox) > 0.5 {
                    bad += 1;
                }
            }
        }
        if kept.windows(2).any(|w| w[0].score < w[1].score) {
            bad += 1;
        }
        // every suppressed candidate above the floor overlaps a kept
        // detection of its class with a score at least as high
        for d in dets.iter().filter(|d| d.score >= 0.05 && !kept.contains(d)) {
            let covered = kept.iter().any(|k| {
                k.class_index == d.class_index && k.score >= d.score && iou(&k.bbox, &d.bbox) > 0.5
            });
            if !covered {
                bad += 1;
            }
        }
    }
    bad
}

/// Six-loop zero-padded 3×3 convolution.
pub fn brute_conv(input: &FeatureTensor, layer: &ConvLayer) -> FeatureTensor {
    let (c, h, w) = input.shape();
    let s = layer.stride;
    let oh = (h - 1) / s + 1;
    let ow = (w - 1) / s + 1;
    let mut out = FeatureTensor::zeros(layer.out_channels, oh, ow);
    for o in 0..layer.out_channels {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = layer.bias[o];
                for i in 0..c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (y * s + ky) as isize - 1;
                            let ix = (x * s + kx) as isize - 1;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let wt = layer.weights[((o * c + i) * 3 + ky) * 3 + kx];
                            acc += wt * input.get(i, iy as usize, ix as usize);
                        }
                    }
                }
                out.set(o, y, x, acc);
            }
        }
    }
    out
}

pub fn conv_vs_brute_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..60 {
        let cin = rng.gen_range(1..=4);
        let cout = rng.gen_range(1..=4);
        let h = rng.gen_range(1..=12);
        let w = rng.gen_range(1..=12);
        let stride = rng.gen_range(1..=2);
        let mut layer = ConvLayer::uniform(cin, cout, stride, ConvActivation::None, 1.0, &mut rng);
        layer.bias.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
        let values = (0..cin * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let input = FeatureTensor::from_values(cin, h, w, values).unwrap();
        let fast = layer.convolve(&input).unwrap();
        let slow = brute_conv(&input, &layer);
        assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.values().iter().zip(slow.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Box subnets must emit `A·4` channels per level.
pub fn subnet_shape_ok() -> bool {
    let mut rng = rng(9);
    let layers = vec![
        ConvLayer::uniform(4, 4, 1, ConvActivation::Relu, 0.1, &mut rng),
        ConvLayer::uniform(4, 12, 1, ConvActivation::None, 0.1, &mut rng),
    ];
    let stack = qretina::detector::ConvStack::new(layers).unwrap();
    let p = FeatureTensor::zeros(4, 5, 5);
    box_subnet(&p, &stack, 3).map(|t| t.channels() == 12).unwrap_or(false)
}

// ---------------------------------------------------------------- metrics

/// P(score of a positive > score of a negative) + ½·P(tie).
pub fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| !**l).map(|(s, _)| *s).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

fn random_scored<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<bool>) {
    loop {
        let n = rng.gen_range(2..60);
        // coarse grid so that ties occur
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..20) as f64 / 20.0).collect();
        let labels: Vec<bool> = scores.iter().map(|s| rng.gen_bool(0.3 + 0.4 * s)).collect();
        if labels.iter().any(|l| *l) && labels.iter().any(|l| !*l) {
            return (scores, labels);
        }
    }
}

pub fn auc_vs_mann_whitney_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..300 {
        let (scores, labels) = random_scored(&mut rng);
        let a = auc(&roc(&scores, &labels).unwrap());
        worst = worst.max((a - mann_whitney(&scores, &labels)).abs());
    }
    worst
}

/// ROC point sets and AUC under strictly increasing transforms.
pub fn auc_transform_error(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0_f64;
    let transforms: [fn(f64) -> f64; 3] = [|s| s.powi(3) * 5.0 - 2.0, |s| (s * 3.0).exp(), |s| 1.0 / (1.0 + (-10.0 * s).exp())];
    for _ in 0..200 {
        let (scores, labels) = random_scored(&mut rng);
        let base = roc(&scores, &labels).unwrap();
        for f in transforms {
            let t: Vec<f64> = scores.iter().map(|s| f(*s)).collect();
            let c = roc(&t, &labels).unwrap();
            if c.points.len() != base.points.len() {
                return f64::INFINITY;
            }
            for (p, q) in c.points.iter().zip(&base.points) {
                worst = worst.max((p.0 - q.0).abs()).max((p.1 - q.1).abs());
            }
            worst = worst.max((auc(&c) - auc(&base)).abs());
        }
    }
    worst
}

/// Row sums count predictions, column sums count actuals, the total counts
/// everything. Returns the number of violated identities.
pub fn confusion_marginal_violations(seed: u64) -> usize {
    let mut rng = rng(seed);
    let mut bad = 0;
    for _ in 0..200 {
        let k = rng.gen_range(1..6);
        let n = rng.gen_range(0..80);
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let actual: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let m = confusion(&preds, &actual, k).unwrap();
        for c in 0..k {
            if m.row_sums()[c] != preds.iter().filter(|&&p| p == c).count() as u64 {
                bad += 1;
            }
            if m.column_sums()[c] != actual.iter().filter(|&&a| a == c).count() as u64 {
                bad += 1;
            }
        }
        if m.total() != n as u64 {
            bad += 1;
        }
        let agree = preds.iter().zip(&actual).filter(|(p, a)| p == a).count() as u64;
        if m.trace() != agree {
            bad += 1;
        }
        for c in 0..k {
            let s = per_class_prf(&m, c);
            let tp = m.counts[c][c] as f64;
            let p = if m.row_sums()[c] == 0 { 0.0 } else { tp / m.row_sums()[c] as f64 };
            let r = if m.column_sums()[c] == 0 { 0.0 } else { tp / m.column_sums()[c] as f64 };
            if (s.precision - p).abs() > 1e-12 || (s.recall - r).abs() > 1e-12 {
                bad += 1;
            }
        }
    }
    bad
}

pub fn f1_worked_error() -> f64 {
    (f1_score(0.5, 1.0) - 2.0 / 3.0).abs()
}

// ---------------------------------------------------------------- data

/// Rule classifier on noise-free renders: aspect ratio of the tight box and
/// the filled fraction of it. Returns the accuracy over `per_class × 4`
/// samples.
pub fn rule_classifier_accuracy(per_class: usize, seed: u64) -> f64 {
    let config = DatasetConfig {
        samples_per_class: per_class,
        seed,
        ..DatasetConfig::default()
    };
    let n = per_class * 4;
    let mut correct = 0;
    for i in 0..n {
        let (img, truths) = render_clean(&config, i);
        let b = truths[0].bbox;
        let (w, h) = (b.width(), b.height());
        let aspect = w.max(h) / w.min(h);
        let filled = img.pixels.iter().filter(|&&p| p > 0).count() as f64;
        let fill = filled / (w * h);
        let guess = classify_glyph(aspect, fill);
        if guess == truths[0].class_index {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}

/// Thresholds read off the glyph recipes: the pistol is nearly square, the
/// shotgun under 2:1, and of the long glyphs the rifle leaves most of its
/// box empty while the knife fills about half.
pub fn classify_glyph(aspect: f64, fill: f64) -> usize {
    if aspect < 1.4 {
        2
    } else if aspect < 2.1 {
        1
    } else if fill < 0.5 {
        0
    } else {
        3
    }
}
