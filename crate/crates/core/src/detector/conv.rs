//! 3×3 same-padded convolutions with cached forward passes for backprop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::FeatureTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvActivation {
    Relu,
    Sigmoid,
    None,
}

impl ConvActivation {
    fn apply(self, x: f64) -> f64 {
        match self {
            ConvActivation::Relu => x.max(0.0),
            ConvActivation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            ConvActivation::None => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            ConvActivation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ConvActivation::Sigmoid => out * (1.0 - out),
            ConvActivation::None => 1.0,
        }
    }
}

/// Weights are `[out][in][ky][kx]`; zero padding of one pixel on every side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: ConvActivation,
}

impl ConvLayer {
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        activation: ConvActivation,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            stride,
            weights: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
            activation,
        }
    }

    /// Weights uniform in `±scale`, zero bias.
    pub fn uniform<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        activation: ConvActivation,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(in_channels, out_channels, stride, activation);
        for w in &mut layer.weights {
            *w = rng.gen_range(-scale..=scale);
        }
        layer
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::arg("conv layer dims and stride must be positive"));
        }
        if self.weights.len() != self.out_channels * self.in_channels * 9
            || self.bias.len() != self.out_channels
        {
            return Err(Error::arg("conv weight/bias length does not match channels"));
        }
        if self.weights.iter().chain(&self.bias).any(|w| !w.is_finite()) {
            return Err(Error::arg("conv weights must be finite"));
        }
        Ok(())
    }

    #[inline]
    fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * 3 + ky) * 3 + kx
    }

    fn out_dim(&self, n: usize) -> usize {
        (n - 1) / self.stride + 1
    }

    /// Valid output positions `x` for tap offset `k` (input = x·s + k − 1).
    fn tap_range(&self, k: usize, in_len: usize, out_len: usize) -> std::ops::Range<usize> {
        let s = self.stride;
        let lo = if k == 0 { 1usize.div_ceil(s) } else { 0 };
        // x·s + k − 1 ≤ in_len − 1  ⇔  x ≤ (in_len − k) / s
        let hi = if in_len >= k {
            ((in_len - k) / s + 1).min(out_len)
        } else {
            0
        };
        lo..hi.max(lo)
    }

    /// Pre-activation convolution output.
    pub fn convolve(&self, input: &FeatureTensor) -> Result<FeatureTensor> {
        if input.channels() != self.in_channels {
            return Err(Error::arg(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                input.channels()
            )));
        }
        let (h, w) = (input.height(), input.width());
        let (oh, ow) = (self.out_dim(h), self.out_dim(w));
        let s = self.stride;
        let mut out = FeatureTensor::zeros(self.out_channels, oh, ow);
        let src = input.values();
        let dst = out.values_mut();
        for o in 0..self.out_channels {
            let plane = &mut dst[o * oh * ow..(o + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = self.bias[o]);
            for i in 0..self.in_channels {
                let inp = &src[i * h * w..(i + 1) * h * w];
                for ky in 0..3 {
                    let ys = self.tap_range(ky, h, oh);
                    for kx in 0..3 {
                        let wt = self.weights[self.w(o, i, ky, kx)];
                        if wt == 0.0 {
                            continue;
                        }
                        let xs = self.tap_range(kx, w, ow);
                        for y in ys.clone() {
                            let iy = y * s + ky - 1;
                            let row_in = &inp[iy * w..(iy + 1) * w];
                            let row_out = &mut plane[y * ow..(y + 1) * ow];
                            for x in xs.clone() {
                                row_out[x] += wt * row_in[x * s + kx - 1];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Accumulates weight/bias gradients into `grad` and returns the input
    /// gradient, given the gradient with respect to the pre-activation output.
    pub fn backward(
        &self,
        input: &FeatureTensor,
        grad_pre: &FeatureTensor,
        grad: &mut ConvLayer,
    ) -> FeatureTensor {
        let (h, w) = (input.height(), input.width());
        let (oh, ow) = (grad_pre.height(), grad_pre.width());
        let s = self.stride;
        let mut grad_in = FeatureTensor::zeros(self.in_channels, h, w);
        let src = input.values();
        let gp = grad_pre.values();
        let gi = grad_in.values_mut();
        for o in 0..self.out_channels {
            let gplane = &gp[o * oh * ow..(o + 1) * oh * ow];
            grad.bias[o] += gplane.iter().sum::<f64>();
            for i in 0..self.in_channels {
                let inp = &src[i * h * w..(i + 1) * h * w];
                let gin = &mut gi[i * h * w..(i + 1) * h * w];
                for ky in 0..3 {
                    let ys = self.tap_range(ky, h, oh);
                    for kx in 0..3 {
                        let widx = self.w(o, i, ky, kx);
                        let wt = self.weights[widx];
                        let xs = self.tap_range(kx, w, ow);
                        let mut acc = 0.0;
                        for y in ys.clone() {
                            let iy = y * s + ky - 1;
                            let grow = &gplane[y * ow..(y + 1) * ow];
                            for x in xs.clone() {
                                let ix = iy * w + x * s + kx - 1;
                                acc += grow[x] * inp[ix];
                                gin[ix] += wt * grow[x];
                            }
                        }
                        grad.weights[widx] += acc;
                    }
                }
            }
        }
        grad_in
    }

    pub fn forward(&self, input: &FeatureTensor) -> Result<FeatureTensor> {
        let mut out = self.convolve(input)?;
        let act = self.activation;
        out.values_mut().iter_mut().for_each(|v| *v = act.apply(*v));
        Ok(out)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_channels, self.out_channels, self.stride, self.activation)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Activations saved by a cached forward pass.
#[derive(Debug, Clone)]
pub struct StackCache {
    /// Input of each layer, then the final output.
    activations: Vec<FeatureTensor>,
    pre: Vec<FeatureTensor>,
}

impl StackCache {
    pub fn output(&self) -> &FeatureTensor {
        self.activations.last().expect("cache holds the input")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvStack {
    pub layers: Vec<ConvLayer>,
}

impl ConvStack {
    pub fn new(layers: Vec<ConvLayer>) -> Result<Self> {
        let stack = Self { layers };
        stack.validate()?;
        Ok(stack)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::arg("conv stack needs at least one layer"));
        }
        for l in &self.layers {
            l.validate()?;
        }
        for (a, b) in self.layers.iter().zip(self.layers.iter().skip(1)) {
            if a.out_channels != b.in_channels {
                return Err(Error::arg(format!(
                    "conv stack channels do not chain: {} → {}",
                    a.out_channels, b.in_channels
                )));
            }
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }

    pub fn forward_cached(&self, input: &FeatureTensor) -> Result<StackCache> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for layer in &self.layers {
            let z = layer.convolve(activations.last().expect("non-empty"))?;
            let mut a = z.clone();
            let act = layer.activation;
            a.values_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            pre.push(z);
            activations.push(a);
        }
        Ok(StackCache { activations, pre })
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the stack output),
    /// accumulating parameter gradients into `grad`.
    pub fn backward(
        &self,
        cache: &StackCache,
        grad_out: FeatureTensor,
        grad: &mut ConvStack,
    ) -> FeatureTensor {
        let mut g = grad_out;
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[k];
            let a = &cache.activations[k + 1];
            let act = layer.activation;
            for ((gv, zv), av) in g.values_mut().iter_mut().zip(z.values()).zip(a.values()) {
                *gv *= act.derivative(*zv, *av);
            }
            g = layer.backward(&cache.activations[k], &g, &mut grad.layers[k]);
        }
        g
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(ConvLayer::zeros_like).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }
}

/// Runs the stack, each layer followed by its activation.
pub fn conv_forward(input: &FeatureTensor, stack: &ConvStack) -> Result<FeatureTensor> {
    stack.validate()?;
    let mut x = input.clone();
    for layer in &stack.layers {
        x = layer.forward(&x)?;
    }
    Ok(x)
}

/// 2×2 stride-2 average pooling (odd trailing rows/columns are dropped).
pub fn avg_pool2(input: &FeatureTensor) -> FeatureTensor {
    let (c, h, w) = input.shape();
    let (oh, ow) = ((h / 2).max(1), (w / 2).max(1));
    let mut out = FeatureTensor::zeros(c, oh, ow);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut sum = 0.0;
                let mut n = 0.0;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let (iy, ix) = (2 * y + dy, 2 * x + dx);
                    if iy < h && ix < w {
                        sum += input.get(ch, iy, ix);
                        n += 1.0;
                    }
                }
                out.set(ch, y, x, sum / n);
            }
        }
    }
    out
}

pub fn avg_pool2_backward(grad_out: &FeatureTensor, in_h: usize, in_w: usize) -> FeatureTensor {
    let (c, oh, ow) = grad_out.shape();
    let mut g = FeatureTensor::zeros(c, in_h, in_w);
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let cells: Vec<(usize, usize)> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(dy, dx)| (2 * y + dy, 2 * x + dx))
                    .filter(|&(iy, ix)| iy < in_h && ix < in_w)
                    .collect();
                let share = grad_out.get(ch, y, x) / cells.len() as f64;
                for (iy, ix) in cells {
                    let i = g.index(ch, iy, ix);
                    g.values_mut()[i] += share;
                }
            }
        }
    }
    g
}
