//! Hybrid training: backpropagation through the detection head, parameter
//! shift through the quanvolution filters, plain SGD on both.

mod checkpoint;
mod eval;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta,
    FORMAT_VERSION,
};
pub use eval::{detect, evaluate, object_outcomes};

use crate::data::{augment, mix_seed, Sample};
use crate::detector::conv::StackCache;
use crate::detector::{
    detection_loss, generate_anchors, match_anchors, AnchorConfig, AnchorSet, ConvActivation,
    ConvLayer, ConvStack, DetectorHead, HeadConfig, HeadOutput, LossConfig, MatchThresholds,
    PostprocessConfig,
};
use crate::error::{Error, Result};
use crate::quanv::{
    encode_patch, extract_patches, filter_output_with_grad, layer_forward, Activation, Encoding,
    Pooling, QuanvLayer,
};
use crate::tensor::FeatureTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemKind {
    Quantum,
    Classical,
}

impl FromStr for StemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum" => Ok(StemKind::Quantum),
            "classical" => Ok(StemKind::Classical),
            other => Err(Error::arg(format!("unknown stem kind {other:?}"))),
        }
    }
}

impl fmt::Display for StemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StemKind::Quantum => "quantum",
            StemKind::Classical => "classical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumStemConfig {
    pub patch_size: usize,
    pub stride: usize,
    pub ansatz_layers: usize,
    pub encoding: Encoding,
    pub pooling: Pooling,
    pub activation: Activation,
}

impl Default for QuantumStemConfig {
    fn default() -> Self {
        Self {
            patch_size: 2,
            stride: 2,
            ansatz_layers: 1,
            encoding: Encoding::Angle,
            pooling: Pooling::Expectation,
            activation: Activation::None,
        }
    }
}

/// Everything needed to rebuild a model's architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    pub stem: StemKind,
    /// Stem output channels: quanvolution filters or classical conv maps.
    pub stem_channels: usize,
    pub quantum: QuantumStemConfig,
    pub head: HeadConfig,
    /// Label per class index, carried into checkpoints.
    pub class_names: Vec<String>,
    /// Seed for weight initialization.
    pub seed: u64,
}

/// The canonical roster when the count matches it, `class0`, `class1`, ...
/// otherwise.
pub fn default_class_names(n: usize) -> Vec<String> {
    if n == crate::CLASS_NAMES.len() {
        crate::CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|c| format!("class{c}")).collect()
    }
}

impl ModelConfig {
    pub fn new(stem: StemKind, n_classes: usize) -> Self {
        Self {
            image_size: 32,
            stem,
            stem_channels: 4,
            quantum: QuantumStemConfig::default(),
            head: HeadConfig::new(n_classes),
            class_names: default_class_names(n_classes),
            seed: 0,
        }
    }

    /// 8×8 images, one 2×2 filter, one anchor shape per level and a
    /// narrow head: small enough for exhaustive finite differences.
    pub fn micro(stem: StemKind) -> Self {
        Self {
            image_size: 8,
            stem,
            stem_channels: 1,
            quantum: QuantumStemConfig::default(),
            head: HeadConfig {
                width: 4,
                hidden_layers: 1,
                n_classes: 2,
                anchors: AnchorConfig {
                    level_strides: vec![2, 4],
                    scales: vec![4.0, 8.0],
                    ratios: vec![1.0],
                },
                init_scale: 0.5,
            },
            class_names: default_class_names(2),
            seed: 0,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.head.n_classes
    }

    /// Spatial side of the stem output.
    pub fn stem_size(&self) -> usize {
        match self.stem {
            StemKind::Quantum => {
                let q = &self.quantum;
                (self.image_size - q.patch_size) / q.stride + 1
            }
            StemKind::Classical => (self.image_size - 1) / 2 + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.len() != self.head.n_classes {
            return Err(Error::Config(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.head.n_classes
            )));
        }
        if self.stem_channels == 0 {
            return Err(Error::Config("stem needs at least one channel".into()));
        }
        let q = &self.quantum;
        if q.patch_size == 0 || q.stride == 0 || q.patch_size > self.image_size {
            return Err(Error::Config(format!(
                "patch {}×{} with stride {} does not fit a {} px image",
                q.patch_size, q.patch_size, q.stride, self.image_size
            )));
        }
        // Both stems must land on the same grid so they are interchangeable.
        let quantum_side = (self.image_size - q.patch_size) / q.stride + 1;
        let classical_side = (self.image_size - 1) / 2 + 1;
        if quantum_side != classical_side {
            return Err(Error::Config(format!(
                "quantum stem grid {quantum_side} differs from classical grid {classical_side}"
            )));
        }
        let strides = &self.head.anchors.level_strides;
        if strides.len() != 2 || strides[1] != 2 * strides[0] {
            return Err(Error::Config(
                "anchors need two levels, the second at twice the first stride".into(),
            ));
        }
        if strides[0] * quantum_side != self.image_size {
            return Err(Error::Config(format!(
                "first anchor stride {} does not match the {quantum_side}-cell stem grid",
                strides[0]
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stem {
    Quantum(QuanvLayer),
    Classical(ConvStack),
}

impl Stem {
    pub fn kind(&self) -> StemKind {
        match self {
            Stem::Quantum(_) => StemKind::Quantum,
            Stem::Classical(_) => StemKind::Classical,
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            Stem::Quantum(layer) => layer.filters.len(),
            Stem::Classical(stack) => stack.out_channels(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Stem::Quantum(layer) => layer.param_count(),
            Stem::Classical(stack) => stack.param_count(),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Stem::Quantum(layer) => {
                let mut z = layer.clone();
                for f in &mut z.filters {
                    f.params_mut().iter_mut().for_each(|p| *p = 0.0);
                }
                Stem::Quantum(z)
            }
            Stem::Classical(stack) => Stem::Classical(stack.zeros_like()),
        }
    }
}

fn stack_tensors<'a>(prefix: &str, stack: &'a ConvStack, out: &mut Vec<(String, &'a [f64])>) {
    for (i, l) in stack.layers.iter().enumerate() {
        out.push((format!("{prefix}.layer{i}.weight"), &l.weights));
        out.push((format!("{prefix}.layer{i}.bias"), &l.bias));
    }
}

fn stack_tensors_mut<'a>(stack: &'a mut ConvStack, out: &mut Vec<&'a mut [f64]>) {
    for l in &mut stack.layers {
        out.push(&mut l.weights);
        out.push(&mut l.bias);
    }
}

/// Every trainable tensor of a model; also the shape of its gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub stem: Stem,
    pub head: DetectorHead,
}

impl Weights {
    pub fn zeros_like(&self) -> Self {
        Self {
            stem: self.stem.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    /// Named flat tensors in a fixed order (stem first, then the head).
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        match &self.stem {
            Stem::Quantum(layer) => {
                for (i, f) in layer.filters.iter().enumerate() {
                    out.push((format!("stem.filter{i}"), f.params()));
                }
            }
            Stem::Classical(stack) => stack_tensors("stem", stack, &mut out),
        }
        for (name, stack) in self.head.stacks() {
            stack_tensors(name, stack, &mut out);
        }
        out
    }

    /// Same order as [`Weights::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        match &mut self.stem {
            Stem::Quantum(layer) => {
                for f in &mut layer.filters {
                    out.push(f.params_mut());
                }
            }
            Stem::Classical(stack) => stack_tensors_mut(stack, &mut out),
        }
        for stack in self.head.stacks_mut() {
            stack_tensors_mut(stack, &mut out);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Weights) {
        for (a, (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// `self -= lr · grad`.
    pub fn sgd_step(&mut self, grad: &Weights, learning_rate: f64) {
        for (w, (_, g)) in self.tensors_mut().into_iter().zip(grad.tensors()) {
            w.iter_mut().zip(g).for_each(|(x, y)| *x -= learning_rate * y);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub weights: Weights,
    /// Settings of the last [`fit`], echoed into checkpoints.
    pub trained_with: Option<TrainConfig>,
    anchors: AnchorSet,
}

impl Model {
    /// Random initialization from `config.seed`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let stem = match config.stem {
            StemKind::Quantum => {
                let q = &config.quantum;
                let mut layer = QuanvLayer::random(
                    q.patch_size,
                    q.stride,
                    config.stem_channels,
                    q.ansatz_layers,
                    &mut rng,
                )?;
                layer.encoding = q.encoding;
                layer.pooling = q.pooling;
                layer.activation = q.activation;
                Stem::Quantum(layer)
            }
            StemKind::Classical => Stem::Classical(ConvStack::new(vec![ConvLayer::uniform(
                1,
                config.stem_channels,
                2,
                ConvActivation::Relu,
                config.head.init_scale,
                &mut rng,
            )])?),
        };
        let head = DetectorHead::init(config.stem_channels, &config.head, &mut rng)?;
        Self::from_weights(config, Weights { stem, head })
    }

    pub fn from_weights(config: ModelConfig, weights: Weights) -> Result<Self> {
        config.validate()?;
        if weights.stem.kind() != config.stem {
            return Err(Error::Config(format!(
                "config names a {} stem, weights hold a {} stem",
                config.stem,
                weights.stem.kind()
            )));
        }
        weights.head.validate()?;
        if weights.stem.out_channels() != weights.head.stem_channels() {
            return Err(Error::Config(format!(
                "stem emits {} channels, pyramid expects {}",
                weights.stem.out_channels(),
                weights.head.stem_channels()
            )));
        }
        if weights.head.n_classes != config.n_classes() {
            return Err(Error::Config("head class count differs from config".into()));
        }
        let anchors = generate_anchors(config.image_size, &config.head.anchors)?;
        Ok(Self {
            config,
            weights,
            trained_with: None,
            anchors,
        })
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    pub fn n_classes(&self) -> usize {
        self.config.n_classes()
    }

    fn check_image(&self, image: &FeatureTensor) -> Result<()> {
        let n = self.config.image_size;
        if image.shape() != (1, n, n) {
            return Err(Error::Config(format!(
                "model expects a 1×{n}×{n} image, got {:?}",
                image.shape()
            )));
        }
        Ok(())
    }

    pub fn stem_forward(&self, image: &FeatureTensor) -> Result<FeatureTensor> {
        self.check_image(image)?;
        match &self.weights.stem {
            Stem::Quantum(layer) => layer_forward(image, layer),
            Stem::Classical(stack) => Ok(stack.forward_cached(image)?.output().clone()),
        }
    }

    /// Per-anchor class scores and box offsets for one normalized image.
    pub fn forward(&self, image: &FeatureTensor) -> Result<HeadOutput> {
        self.weights.head.forward(&self.stem_forward(image)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds the split, the shuffling and augmentation.
    pub seed: u64,
    pub holdout_fraction: f64,
    pub augment: bool,
    pub loss: LossConfig,
    pub matching: MatchThresholds,
    pub postprocess: PostprocessConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            learning_rate: 0.01,
            seed: 0,
            holdout_fraction: 0.2,
            augment: false,
            loss: LossConfig::default(),
            matching: MatchThresholds::default(),
            postprocess: PostprocessConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config("learning rate must be finite and ≥ 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Unnormalized loss pieces of one image.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SampleLoss {
    pub focal: f64,
    pub boxes: f64,
    pub n_positive: usize,
}

impl SampleLoss {
    pub fn total(&self) -> f64 {
        self.focal + self.boxes
    }
}

enum StemTrace {
    /// Per (filter, patch) output gradients w.r.t. that filter's params.
    Quantum { plane: usize, jacobian: Vec<Vec<f64>> },
    Classical(StackCache),
}

fn stem_forward_traced(
    model: &Model,
    image: &FeatureTensor,
) -> Result<(FeatureTensor, StemTrace)> {
    model.check_image(image)?;
    match &model.weights.stem {
        Stem::Quantum(layer) => {
            let grid = extract_patches(image, layer.patch_size, layer.stride)?;
            let plane = grid.rows * grid.cols;
            let n_filters = layer.filters.len();
            let mut values = vec![0.0; n_filters * plane];
            let mut jacobian = vec![Vec::new(); n_filters * plane];
            for (p, patch) in grid.patches.iter().enumerate() {
                let input = encode_patch(patch, layer.encoding)?;
                for (c, filter) in layer.filters.iter().enumerate() {
                    let (v, g) = filter_output_with_grad(&input, filter, layer)?;
                    values[c * plane + p] = v;
                    jacobian[c * plane + p] = g;
                }
            }
            let out = FeatureTensor::from_values(n_filters, grid.rows, grid.cols, values)?;
            Ok((out, StemTrace::Quantum { plane, jacobian }))
        }
        Stem::Classical(stack) => {
            let cache = stack.forward_cached(image)?;
            Ok((cache.output().clone(), StemTrace::Classical(cache)))
        }
    }
}

fn sample_terms(
    model: &Model,
    sample: &Sample,
    output: &HeadOutput,
    config: &TrainConfig,
) -> Result<crate::detector::LossTerms> {
    if let Some(t) = sample.truths.iter().find(|t| t.class_index >= model.n_classes()) {
        return Err(Error::Config(format!(
            "truth class {} outside the model's {} classes",
            t.class_index,
            model.n_classes()
        )));
    }
    let assignments = match_anchors(&model.anchors.anchors, &sample.truths, config.matching);
    detection_loss(output, &model.anchors, &assignments, &sample.truths, &config.loss)
}

/// Loss of one image without gradients.
pub fn sample_loss(model: &Model, sample: &Sample, config: &TrainConfig) -> Result<SampleLoss> {
    let output = model.forward(&sample.image)?;
    let terms = sample_terms(model, sample, &output, config)?;
    Ok(SampleLoss {
        focal: terms.focal,
        boxes: terms.boxes,
        n_positive: terms.n_positive,
    })
}

/// Loss and unnormalized gradient for one image. `index` tags a divergence.
pub fn sample_gradient(
    model: &Model,
    sample: &Sample,
    index: usize,
    config: &TrainConfig,
) -> Result<(SampleLoss, Weights)> {
    let (stem_out, trace) = stem_forward_traced(model, &sample.image)?;
    let head = &model.weights.head;
    let (output, cache) = head.forward_cached(&stem_out)?;
    let terms = sample_terms(model, sample, &output, config)?;
    if !terms.total().is_finite() {
        return Err(Error::Divergence { sample: index });
    }
    let mut grad = model.weights.zeros_like();
    let g_stem = head.backward(&cache, &terms.grad_scores, &terms.grad_offsets, &mut grad.head);
    match (trace, &mut grad.stem, &model.weights.stem) {
        (StemTrace::Quantum { plane, jacobian }, Stem::Quantum(g), _) => {
            for (i, (upstream, jac)) in g_stem.values().iter().zip(&jacobian).enumerate() {
                let params = g.filters[i / plane].params_mut();
                params
                    .iter_mut()
                    .zip(jac)
                    .for_each(|(p, d)| *p += upstream * d);
            }
        }
        (StemTrace::Classical(cache), Stem::Classical(g), Stem::Classical(stack)) => {
            stack.backward(&cache, g_stem, g);
        }
        _ => unreachable!("gradient mirrors the model stem"),
    }
    // ReLU clamps NaN to zero, so a poisoned input can leave the loss finite.
    if grad.tensors().iter().any(|(_, t)| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::Divergence { sample: index });
    }
    let loss = SampleLoss {
        focal: terms.focal,
        boxes: terms.boxes,
        n_positive: terms.n_positive,
    };
    Ok((loss, grad))
}

/// Normalizer shared by a batch: the total positive count, at least one.
fn normalizer(losses: &[SampleLoss]) -> f64 {
    losses.iter().map(|l| l.n_positive).sum::<usize>().max(1) as f64
}

/// Batch loss normalized by the batch's positive anchors.
pub fn batch_loss(model: &Model, samples: &[&Sample], config: &TrainConfig) -> Result<f64> {
    let losses: Vec<SampleLoss> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let l = sample_loss(model, s, config)?;
            if l.total().is_finite() {
                Ok(l)
            } else {
                Err(Error::Divergence { sample: i })
            }
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().map(SampleLoss::total).sum::<f64>() / normalizer(&losses))
}

#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub loss: f64,
    pub n_positive: usize,
    pub grad: Weights,
}

/// Gradient of [`batch_loss`]. Samples are tagged with `indices` for
/// divergence reports. Per-image work runs in parallel and is summed in
/// input order, so the result does not depend on the thread count.
pub fn backward(
    model: &Model,
    samples: &[&Sample],
    indices: &[usize],
    config: &TrainConfig,
) -> Result<BatchGradient> {
    if samples.is_empty() || samples.len() != indices.len() {
        return Err(Error::arg("batch needs samples with matching indices"));
    }
    let parts: Vec<(SampleLoss, Weights)> = samples
        .par_iter()
        .zip(indices.par_iter())
        .map(|(s, &i)| sample_gradient(model, s, i, config))
        .collect::<Result<_>>()?;
    let losses: Vec<SampleLoss> = parts.iter().map(|(l, _)| *l).collect();
    let norm = normalizer(&losses);
    let mut iter = parts.into_iter();
    let (_, mut grad) = iter.next().expect("non-empty batch");
    for (_, g) in iter {
        grad.add_assign(&g);
    }
    grad.scale(1.0 / norm);
    Ok(BatchGradient {
        loss: losses.iter().map(SampleLoss::total).sum::<f64>() / norm,
        n_positive: losses.iter().map(|l| l.n_positive).sum(),
        grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Eval => "eval",
        })
    }
}

/// One row of the loss log. Epoch 0 describes the initial weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitLog {
    pub records: Vec<EpochRecord>,
}

impl FitLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,split,loss,accuracy\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.split, r.loss, r.accuracy));
        }
        out
    }

    fn rows(&self, split: Split) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn initial(&self, split: Split) -> Option<&EpochRecord> {
        self.rows(split).next()
    }

    pub fn last(&self, split: Split) -> Option<&EpochRecord> {
        self.rows(split).last()
    }
}

/// Seeded 80/20-style split: `(train, held_out)` index lists.
pub fn split_indices(n: usize, holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::MAX)));
    let held = (n as f64 * holdout_fraction).round() as usize;
    let held_out = order.split_off(n - held.min(n));
    (order, held_out)
}

fn split_record(
    model: &Model,
    samples: &[&Sample],
    epoch: usize,
    split: Split,
    config: &TrainConfig,
) -> Result<Option<EpochRecord>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let loss = batch_loss(model, samples, config)?;
    let owned: Vec<Sample> = samples.iter().map(|s| (*s).clone()).collect();
    let report = evaluate(model, &owned, &model.config.class_names, &config.postprocess)?;
    Ok(Some(EpochRecord {
        epoch,
        split,
        loss,
        accuracy: report.accuracy,
    }))
}

/// Trains `model` in place and returns the loss log. `on_epoch` sees every
/// record as soon as it is computed.
pub fn fit_with(
    model: &mut Model,
    samples: &[Sample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitLog> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::arg("cannot train on an empty dataset"));
    }
    let (train_idx, held_idx) = split_indices(samples.len(), config.holdout_fraction, config.seed);
    let train: Vec<&Sample> = train_idx.iter().map(|&i| &samples[i]).collect();
    let held: Vec<&Sample> = held_idx.iter().map(|&i| &samples[i]).collect();
    model.trained_with = Some(*config);
    let mut log = FitLog::default();
    let mut record = |log: &mut FitLog, model: &Model, epoch: usize| -> Result<()> {
        for (split, set) in [(Split::Train, &train), (Split::Eval, &held)] {
            if let Some(r) = split_record(model, set, epoch, split, config)
                .map_err(|e| at_epoch(e, epoch))?
            {
                on_epoch(&r);
                log.records.push(r);
            }
        }
        Ok(())
    };
    record(&mut log, model, 0)?;
    let mut order = train_idx.clone();
    for epoch in 1..=config.epochs {
        let epoch_seed = mix_seed(config.seed, epoch as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| {
                    if config.augment {
                        augment(&samples[i], mix_seed(epoch_seed, i as u64))
                    } else {
                        samples[i].clone()
                    }
                })
                .collect();
            let refs: Vec<&Sample> = batch.iter().collect();
            let step = backward(model, &refs, chunk, config).map_err(|e| at_epoch(e, epoch))?;
            model.weights.sgd_step(&step.grad, config.learning_rate);
        }
        record(&mut log, model, epoch)?;
    }
    Ok(log)
}

pub fn fit(model: &mut Model, samples: &[Sample], config: &TrainConfig) -> Result<FitLog> {
    fit_with(model, samples, config, |_| {})
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Divergence { sample } => Error::DivergedAt { epoch, sample },
        other => other,
    }
}
