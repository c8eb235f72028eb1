//! Two-level pyramid plus shared classification and box subnets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::anchors::{AnchorConfig, AnchorSet};
use super::boxes::{decode_box, encode_box, nms, Assignment, Detection, Truth};
use super::conv::{
    avg_pool2, avg_pool2_backward, conv_forward, ConvActivation, ConvLayer, ConvStack, StackCache,
};
use super::loss::{focal_loss, focal_loss_grad, smooth_l1, smooth_l1_grad, FocalParams};
use crate::error::{Error, Result};
use crate::tensor::FeatureTensor;

/// Prior foreground probability used to bias the classification output.
pub const PRIOR_PROBABILITY: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub width: usize,
    pub hidden_layers: usize,
    pub n_classes: usize,
    pub anchors: AnchorConfig,
    /// Half-width of the uniform weight initialization.
    pub init_scale: f64,
}

impl HeadConfig {
    pub fn new(n_classes: usize) -> Self {
        Self {
            width: 16,
            hidden_layers: 4,
            n_classes,
            anchors: AnchorConfig::default(),
            init_scale: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorHead {
    /// Stem features → P1 (same resolution).
    pub lateral: ConvStack,
    /// Pooled P1 → P2.
    pub downsample: ConvStack,
    pub class_net: ConvStack,
    pub box_net: ConvStack,
    pub per_location: usize,
    pub n_classes: usize,
}

fn subnet<R: Rng>(
    width: usize,
    hidden: usize,
    out: usize,
    out_act: ConvActivation,
    scale: f64,
    rng: &mut R,
) -> ConvStack {
    let mut layers: Vec<ConvLayer> = (0..hidden)
        .map(|_| ConvLayer::uniform(width, width, 1, ConvActivation::Relu, scale, rng))
        .collect();
    layers.push(ConvLayer::uniform(width, out, 1, out_act, scale, rng));
    ConvStack { layers }
}

impl DetectorHead {
    pub fn init<R: Rng>(stem_channels: usize, config: &HeadConfig, rng: &mut R) -> Result<Self> {
        if config.width == 0 || config.n_classes == 0 || config.anchors.per_location() == 0 {
            return Err(Error::Config("head width, classes and anchors must be positive".into()));
        }
        let (w, s) = (config.width, config.init_scale);
        let a = config.anchors.per_location();
        let lateral = ConvStack {
            layers: vec![ConvLayer::uniform(stem_channels, w, 1, ConvActivation::None, s, rng)],
        };
        let downsample = ConvStack {
            layers: vec![ConvLayer::uniform(w, w, 1, ConvActivation::None, s, rng)],
        };
        let mut class_net = subnet(
            w,
            config.hidden_layers,
            a * config.n_classes,
            ConvActivation::Sigmoid,
            s,
            rng,
        );
        let prior_bias = (PRIOR_PROBABILITY / (1.0 - PRIOR_PROBABILITY)).ln();
        class_net
            .layers
            .last_mut()
            .expect("output layer")
            .bias
            .iter_mut()
            .for_each(|b| *b = prior_bias);
        let box_net = subnet(w, config.hidden_layers, a * 4, ConvActivation::None, s, rng);
        let head = Self {
            lateral,
            downsample,
            class_net,
            box_net,
            per_location: a,
            n_classes: config.n_classes,
        };
        head.validate()?;
        Ok(head)
    }

    pub fn validate(&self) -> Result<()> {
        for s in [&self.lateral, &self.downsample, &self.class_net, &self.box_net] {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let width = self.lateral.out_channels();
        if self.downsample.in_channels() != width
            || self.class_net.in_channels() != width
            || self.box_net.in_channels() != width
        {
            return Err(Error::Config("pyramid and subnet widths disagree".into()));
        }
        if self.class_net.out_channels() != self.per_location * self.n_classes {
            return Err(Error::Config(format!(
                "class subnet emits {} channels, expected {}",
                self.class_net.out_channels(),
                self.per_location * self.n_classes
            )));
        }
        if self.box_net.out_channels() != self.per_location * 4 {
            return Err(Error::Config(format!(
                "box subnet emits {} channels, expected {}",
                self.box_net.out_channels(),
                self.per_location * 4
            )));
        }
        Ok(())
    }

    pub fn stem_channels(&self) -> usize {
        self.lateral.in_channels()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            lateral: self.lateral.zeros_like(),
            downsample: self.downsample.zeros_like(),
            class_net: self.class_net.zeros_like(),
            box_net: self.box_net.zeros_like(),
            per_location: self.per_location,
            n_classes: self.n_classes,
        }
    }

    pub fn stacks(&self) -> [(&'static str, &ConvStack); 4] {
        [
            ("lateral", &self.lateral),
            ("downsample", &self.downsample),
            ("class_net", &self.class_net),
            ("box_net", &self.box_net),
        ]
    }

    pub fn stacks_mut(&mut self) -> [&mut ConvStack; 4] {
        [
            &mut self.lateral,
            &mut self.downsample,
            &mut self.class_net,
            &mut self.box_net,
        ]
    }
}

/// `P1` = conv of the stem output, `P2` = conv of the 2×2-averaged `P1`.
pub fn build_pyramid(
    stem_output: &FeatureTensor,
    head: &DetectorHead,
) -> Result<(FeatureTensor, FeatureTensor)> {
    let p1 = conv_forward(stem_output, &head.lateral)?;
    let p2 = conv_forward(&avg_pool2(&p1), &head.downsample)?;
    Ok((p1, p2))
}

/// Per-location class probabilities, `A·Y` channels.
pub fn class_subnet(
    features: &FeatureTensor,
    stack: &ConvStack,
    per_location: usize,
    n_classes: usize,
) -> Result<FeatureTensor> {
    if stack.out_channels() != per_location * n_classes {
        return Err(Error::arg(format!(
            "class subnet has {} output channels, need {}",
            stack.out_channels(),
            per_location * n_classes
        )));
    }
    conv_forward(features, stack)
}

/// Per-location box offsets, `A·4` channels, shared by every class.
pub fn box_subnet(
    features: &FeatureTensor,
    stack: &ConvStack,
    per_location: usize,
) -> Result<FeatureTensor> {
    if stack.out_channels() != per_location * 4 {
        return Err(Error::arg(format!(
            "box subnet has {} output channels, need {}",
            stack.out_channels(),
            per_location * 4
        )));
    }
    conv_forward(features, stack)
}

/// Flattened per-anchor outputs in anchor order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    /// `n_anchors × n_classes`
    pub scores: Vec<f64>,
    /// `n_anchors × 4`
    pub offsets: Vec<f64>,
    pub n_classes: usize,
}

impl HeadOutput {
    pub fn n_anchors(&self) -> usize {
        self.offsets.len() / 4
    }

    pub fn anchor_scores(&self, anchor: usize) -> &[f64] {
        &self.scores[anchor * self.n_classes..(anchor + 1) * self.n_classes]
    }

    pub fn anchor_offsets(&self, anchor: usize) -> [f64; 4] {
        let o = &self.offsets[anchor * 4..anchor * 4 + 4];
        [o[0], o[1], o[2], o[3]]
    }
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    lateral: StackCache,
    downsample: StackCache,
    class: Vec<StackCache>,
    boxes: Vec<StackCache>,
}

/// Copies `(A·K, H, W)` level tensors into anchor-major rows of `K` values.
fn gather(levels: &[&FeatureTensor], per_location: usize, k: usize) -> Vec<f64> {
    let total: usize = levels.iter().map(|t| t.height() * t.width()).sum();
    let mut out = Vec::with_capacity(total * per_location * k);
    for t in levels {
        for i in 0..t.height() {
            for j in 0..t.width() {
                for a in 0..per_location {
                    for c in 0..k {
                        out.push(t.get(a * k + c, i, j));
                    }
                }
            }
        }
    }
    out
}

fn scatter(
    flat: &[f64],
    dims: &[(usize, usize)],
    per_location: usize,
    k: usize,
) -> Vec<FeatureTensor> {
    let mut pos = 0;
    dims.iter()
        .map(|&(h, w)| {
            let mut t = FeatureTensor::zeros(per_location * k, h, w);
            for i in 0..h {
                for j in 0..w {
                    for a in 0..per_location {
                        for c in 0..k {
                            t.set(a * k + c, i, j, flat[pos]);
                            pos += 1;
                        }
                    }
                }
            }
            t
        })
        .collect()
}

impl DetectorHead {
    pub fn forward(&self, stem_output: &FeatureTensor) -> Result<HeadOutput> {
        Ok(self.forward_cached(stem_output)?.0)
    }

    pub fn forward_cached(&self, stem_output: &FeatureTensor) -> Result<(HeadOutput, HeadCache)> {
        if stem_output.channels() != self.stem_channels() {
            return Err(Error::Config(format!(
                "stem emits {} channels, head expects {}",
                stem_output.channels(),
                self.stem_channels()
            )));
        }
        let lateral = self.lateral.forward_cached(stem_output)?;
        let downsample = self
            .downsample
            .forward_cached(&avg_pool2(lateral.output()))?;
        let levels = [lateral.output(), downsample.output()];
        let class = levels
            .iter()
            .map(|p| self.class_net.forward_cached(p))
            .collect::<Result<Vec<_>>>()?;
        let boxes = levels
            .iter()
            .map(|p| self.box_net.forward_cached(p))
            .collect::<Result<Vec<_>>>()?;
        let class_out: Vec<&FeatureTensor> = class.iter().map(StackCache::output).collect();
        let box_out: Vec<&FeatureTensor> = boxes.iter().map(StackCache::output).collect();
        let output = HeadOutput {
            scores: gather(&class_out, self.per_location, self.n_classes),
            offsets: gather(&box_out, self.per_location, 4),
            n_classes: self.n_classes,
        };
        Ok((
            output,
            HeadCache {
                lateral,
                downsample,
                class,
                boxes,
            },
        ))
    }

    /// Accumulates head gradients into `grad` and returns the gradient with
    /// respect to the stem output.
    pub fn backward(
        &self,
        cache: &HeadCache,
        grad_scores: &[f64],
        grad_offsets: &[f64],
        grad: &mut DetectorHead,
    ) -> FeatureTensor {
        let dims: Vec<(usize, usize)> = cache
            .class
            .iter()
            .map(|c| (c.output().height(), c.output().width()))
            .collect();
        let g_class = scatter(grad_scores, &dims, self.per_location, self.n_classes);
        let g_box = scatter(grad_offsets, &dims, self.per_location, 4);
        let mut g_levels = Vec::with_capacity(dims.len());
        for l in 0..dims.len() {
            let mut g = self
                .class_net
                .backward(&cache.class[l], g_class[l].clone(), &mut grad.class_net);
            let gb = self
                .box_net
                .backward(&cache.boxes[l], g_box[l].clone(), &mut grad.box_net);
            g.values_mut()
                .iter_mut()
                .zip(gb.values())
                .for_each(|(a, b)| *a += b);
            g_levels.push(g);
        }
        let g_p2 = g_levels.pop().expect("two levels");
        let mut g_p1 = g_levels.pop().expect("two levels");
        let g_pooled = self
            .downsample
            .backward(&cache.downsample, g_p2, &mut grad.downsample);
        let p1 = cache.lateral.output();
        let g_from_p2 = avg_pool2_backward(&g_pooled, p1.height(), p1.width());
        g_p1.values_mut()
            .iter_mut()
            .zip(g_from_p2.values())
            .for_each(|(a, b)| *a += b);
        self.lateral.backward(&cache.lateral, g_p1, &mut grad.lateral)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub focal: FocalParams,
    pub box_weight: f64,
    pub smooth_l1_beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            focal: FocalParams::default(),
            box_weight: 1.0,
            smooth_l1_beta: 1.0,
        }
    }
}

/// Unnormalized loss sums for one image with gradients w.r.t. the outputs.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub focal: f64,
    pub boxes: f64,
    pub n_positive: usize,
    pub grad_scores: Vec<f64>,
    pub grad_offsets: Vec<f64>,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.focal + self.boxes
    }
}

/// Focal loss over every non-ignored anchor and class, smooth-L1 over the
/// offsets of positive anchors. Normalization by the positive count is left
/// to the caller so that batches normalize once.
pub fn detection_loss(
    output: &HeadOutput,
    anchors: &AnchorSet,
    assignments: &[Assignment],
    truths: &[Truth],
    config: &LossConfig,
) -> Result<LossTerms> {
    let n = anchors.len();
    if output.n_anchors() != n || assignments.len() != n {
        return Err(Error::Config(format!(
            "{} outputs / {} assignments for {n} anchors",
            output.n_anchors(),
            assignments.len()
        )));
    }
    let k = output.n_classes;
    let mut terms = LossTerms {
        focal: 0.0,
        boxes: 0.0,
        n_positive: 0,
        grad_scores: vec![0.0; output.scores.len()],
        grad_offsets: vec![0.0; output.offsets.len()],
    };
    for (a, assignment) in assignments.iter().enumerate() {
        let positive_class = match *assignment {
            Assignment::Ignore => continue,
            Assignment::Negative => None,
            Assignment::Positive { truth, class_index } => {
                terms.n_positive += 1;
                let target = encode_box(&anchors.anchors[a], &truths[truth].bbox);
                let pred = output.anchor_offsets(a);
                for t in 0..4 {
                    terms.boxes +=
                        config.box_weight * smooth_l1(pred[t], target[t], config.smooth_l1_beta);
                    terms.grad_offsets[a * 4 + t] = config.box_weight
                        * smooth_l1_grad(pred[t], target[t], config.smooth_l1_beta);
                }
                Some(class_index)
            }
        };
        for c in 0..k {
            let s = output.scores[a * k + c];
            let positive = positive_class == Some(c);
            terms.focal += focal_loss(s, positive, config.focal);
            terms.grad_scores[a * k + c] = focal_loss_grad(s, positive, config.focal);
        }
    }
    Ok(terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostprocessConfig {
    pub iou_threshold: f64,
    pub score_floor: f64,
    /// Candidates considered by NMS, highest scores first.
    pub pre_nms_top_k: usize,
    pub max_detections: usize,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            score_floor: 0.05,
            pre_nms_top_k: 1000,
            max_detections: 100,
        }
    }
}

/// Decodes, clamps to the image and suppresses per class.
pub fn postprocess(
    output: &HeadOutput,
    anchors: &AnchorSet,
    image_size: usize,
    config: &PostprocessConfig,
) -> Vec<Detection> {
    let size = image_size as f64;
    let k = output.n_classes;
    let mut candidates = Vec::new();
    for (a, anchor) in anchors.anchors.iter().enumerate() {
        let scores = output.anchor_scores(a);
        if scores.iter().all(|&s| s < config.score_floor) {
            continue;
        }
        let bbox = decode_box(anchor, output.anchor_offsets(a)).clamp_to(size, size);
        if !bbox.is_valid() {
            continue;
        }
        for (c, &score) in scores.iter().enumerate().take(k) {
            if score >= config.score_floor {
                candidates.push(Detection {
                    bbox,
                    class_index: c,
                    score,
                });
            }
        }
    }
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score));
    candidates.truncate(config.pre_nms_top_k);
    let mut kept = nms(&candidates, config.iou_threshold, config.score_floor);
    kept.truncate(config.max_detections);
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::anchors::generate_anchors;
    use crate::detector::boxes::{match_anchors, BBox, MatchThresholds};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(head: &DetectorHead) -> DetectorHead {
        head.zeros_like()
    }

    fn random_stem(c: usize, n: usize, rng: &mut ChaCha8Rng) -> FeatureTensor {
        FeatureTensor::from_values(c, n, n, (0..c * n * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn pyramid_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = DetectorHead::init(4, &HeadConfig::new(4), &mut rng).unwrap();
        let stem = random_stem(4, 16, &mut rng);
        let (p1, p2) = build_pyramid(&stem, &head).unwrap();
        assert_eq!(p1.shape(), (16, 16, 16));
        assert_eq!(p2.shape(), (16, 8, 8));
        for p in [&p1, &p2] {
            assert_eq!(class_subnet(p, &head.class_net, 3, 4).unwrap().channels(), 12);
            assert_eq!(box_subnet(p, &head.box_net, 3).unwrap().channels(), 12);
        }
        assert!(class_subnet(&p1, &head.class_net, 3, 5).is_err());
        assert!(box_subnet(&p1, &head.box_net, 2).is_err());
    }

    #[test]
    fn constant_stem_gives_constant_p2_under_center_averaging() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut head = DetectorHead::init(4, &HeadConfig::new(4), &mut rng).unwrap();
        // center-tap channel averaging in both pyramid convs
        for stack in [&mut head.lateral, &mut head.downsample] {
            let l = &mut stack.layers[0];
            let cin = l.in_channels;
            for o in 0..l.out_channels {
                for i in 0..cin {
                    for t in 0..9 {
                        l.weights[(o * cin + i) * 9 + t] = if t == 4 { 1.0 / cin as f64 } else { 0.0 };
                    }
                }
            }
        }
        let stem = FeatureTensor::from_values(4, 16, 16, vec![0.3; 1024]).unwrap();
        let (_, p2) = build_pyramid(&stem, &head).unwrap();
        assert!(p2.values().iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn zero_head_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let head = zeroed(&DetectorHead::init(4, &HeadConfig::new(4), &mut rng).unwrap());
        let out = head.forward(&random_stem(4, 16, &mut rng)).unwrap();
        assert_eq!(out.n_anchors(), 960);
        assert!(out.scores.iter().all(|&s| s == 0.5));
        assert!(out.offsets.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn prior_bias_gives_rare_foreground_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut head = zeroed(&DetectorHead::init(4, &HeadConfig::new(4), &mut rng).unwrap());
        let b = (0.01f64 / 0.99).ln();
        head.class_net.layers.last_mut().unwrap().bias.iter_mut().for_each(|v| *v = b);
        let out = head.forward(&random_stem(4, 16, &mut rng)).unwrap();
        assert!(out.scores.iter().all(|&s| (s - 0.01).abs() < 1e-12));
    }

    #[test]
    fn box_mapping_is_level_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let head = DetectorHead::init(4, &HeadConfig::new(4), &mut rng).unwrap();
        let features = random_stem(16, 8, &mut rng);
        let a = box_subnet(&features, &head.box_net, 3).unwrap();
        let b = box_subnet(&features, &head.box_net, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn head_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut config = HeadConfig::new(2);
        config.width = 3;
        config.hidden_layers = 1;
        config.init_scale = 0.5;
        config.anchors = AnchorConfig {
            level_strides: vec![2, 4],
            scales: vec![4.0, 8.0],
            ratios: vec![1.0, 2.0],
        };
        let head = DetectorHead::init(2, &config, &mut rng).unwrap();
        let anchors = generate_anchors(8, &config.anchors).unwrap();
        let truths = [Truth {
            bbox: BBox::new(1.0, 2.0, 6.0, 5.0),
            class_index: 1,
        }];
        let assignments = match_anchors(&anchors.anchors, &truths, MatchThresholds::default());
        let stem = random_stem(2, 4, &mut rng);
        let loss_of = |h: &DetectorHead, x: &FeatureTensor| {
            let out = h.forward(x).unwrap();
            detection_loss(&out, &anchors, &assignments, &truths, &LossConfig::default())
                .unwrap()
                .total()
        };
        let (out, cache) = head.forward_cached(&stem).unwrap();
        let terms =
            detection_loss(&out, &anchors, &assignments, &truths, &LossConfig::default()).unwrap();
        assert!(terms.n_positive > 0);
        let mut grad = head.zeros_like();
        let g_stem = head.backward(&cache, &terms.grad_scores, &terms.grad_offsets, &mut grad);
        let h = 1e-6;
        for s in 0..4 {
            for l in 0..head.stacks()[s].1.layers.len() {
                for j in 0..head.stacks()[s].1.layers[l].weights.len() {
                    let mut up = head.clone();
                    up.stacks_mut()[s].layers[l].weights[j] += h;
                    let mut down = head.clone();
                    down.stacks_mut()[s].layers[l].weights[j] -= h;
                    let fd = (loss_of(&up, &stem) - loss_of(&down, &stem)) / (2.0 * h);
                    let an = grad.stacks()[s].1.layers[l].weights[j];
                    assert!((fd - an).abs() < 1e-6 + 1e-4 * an.abs(), "{s}/{l}/{j}: {fd} vs {an}");
                }
            }
        }
        for j in 0..stem.values().len() {
            let mut up = stem.clone();
            up.values_mut()[j] += h;
            let mut down = stem.clone();
            down.values_mut()[j] -= h;
            let fd = (loss_of(&head, &up) - loss_of(&head, &down)) / (2.0 * h);
            assert!((fd - g_stem.values()[j]).abs() < 1e-6 + 1e-4 * fd.abs());
        }
    }

    #[test]
    fn no_positives_means_no_box_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let head = DetectorHead::init(4, &HeadConfig::new(4), &mut rng).unwrap();
        let anchors = generate_anchors(32, &AnchorConfig::default()).unwrap();
        let assignments = match_anchors(&anchors.anchors, &[], MatchThresholds::default());
        let out = head.forward(&random_stem(4, 16, &mut rng)).unwrap();
        let terms = detection_loss(&out, &anchors, &assignments, &[], &LossConfig::default()).unwrap();
        assert_eq!(terms.n_positive, 0);
        assert_eq!(terms.boxes, 0.0);
        assert!(terms.grad_offsets.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn postprocess_clamps_and_filters() {
        let anchors = generate_anchors(8, &AnchorConfig {
            level_strides: vec![4],
            scales: vec![12.0],
            ratios: vec![1.0],
        })
        .unwrap();
        let out = HeadOutput {
            scores: vec![0.9, 0.01, 0.02, 0.03, 0.04, 0.6, 0.01, 0.01],
            offsets: vec![0.0; 16],
            n_classes: 2,
        };
        let dets = postprocess(&out, &anchors, 8, &PostprocessConfig::default());
        assert_eq!(dets.len(), 2);
        for d in &dets {
            assert!(d.bbox.x_min >= 0.0 && d.bbox.x_max <= 8.0);
            assert!(d.bbox.y_min >= 0.0 && d.bbox.y_max <= 8.0);
        }
    }
}
