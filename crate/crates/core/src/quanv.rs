//! Quanvolution: each image patch is encoded into a small register, run
//! through a parameterized filter circuit and decoded back to a real number.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{qft_gates, Circuit, Gate, Statevector};
use crate::tensor::FeatureTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Pixel ≥ 0.5 becomes bit 1, prepared with an X gate.
    Basis,
    /// Pixel `v` becomes `RY(πv)|0⟩`.
    Angle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Expectation,
    Amplitude,
    Max,
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    QRelu,
    QSigmoid,
    QSoftmax,
    None,
}

macro_rules! keyword_enum {
    ($ty:ident, $what:literal, { $($name:literal => $variant:ident),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::arg(format!(concat!("unknown ", $what, " {:?}"), other))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $($ty::$variant => $name,)+
                })
            }
        }
    };
}

keyword_enum!(Encoding, "encoding", { "basis" => Basis, "angle" => Angle });
keyword_enum!(Pooling, "pooling mode", {
    "expectation" => Expectation,
    "amplitude" => Amplitude,
    "max" => Max,
    "mean" => Mean,
    "median" => Median,
});
keyword_enum!(Activation, "activation", {
    "q_relu" => QRelu,
    "q_sigmoid" => QSigmoid,
    "q_softmax" => QSoftmax,
    "none" => None,
});

/// One trainable filter circuit. Parameters are laid out as
/// `[layer][qubit][ry, rz]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuanvFilter {
    n_qubits: usize,
    ansatz_layers: usize,
    params: Vec<f64>,
}

impl QuanvFilter {
    pub fn new(n_qubits: usize, ansatz_layers: usize, params: Vec<f64>) -> Result<Self> {
        if n_qubits == 0 || ansatz_layers == 0 {
            return Err(Error::arg("filter needs at least one qubit and one layer"));
        }
        let expected = ansatz_layers * n_qubits * 2;
        if params.len() != expected {
            return Err(Error::arg(format!(
                "filter with {n_qubits} qubits and {ansatz_layers} layers needs {expected} params, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::arg("filter parameters must be finite"));
        }
        Ok(Self {
            n_qubits,
            ansatz_layers,
            params,
        })
    }

    /// Parameters drawn uniformly from `[0, 2π)`.
    pub fn random<R: Rng>(n_qubits: usize, ansatz_layers: usize, rng: &mut R) -> Result<Self> {
        let params = (0..ansatz_layers * n_qubits * 2)
            .map(|_| rng.gen_range(0.0..2.0 * PI))
            .collect();
        Self::new(n_qubits, ansatz_layers, params)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ansatz_layers(&self) -> usize {
        self.ansatz_layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Per layer: RY then RZ on every qubit, then a CNOT ring
    /// (`i` controls `i+1 mod n`); one QFT over the whole register closes the
    /// circuit.
    pub fn circuit(&self) -> Result<Circuit> {
        let mut circuit = Circuit::new(self.n_qubits)?;
        for gate in filter_gates(self.n_qubits, self.ansatz_layers, &self.params)? {
            circuit.push(gate)?;
        }
        Ok(circuit)
    }
}

fn filter_gates(n: usize, layers: usize, params: &[f64]) -> Result<Vec<Gate>> {
    let mut gates = Vec::with_capacity(layers * 3 * n + n * n);
    for layer in 0..layers {
        let base = layer * 2 * n;
        for q in 0..n {
            gates.push(Gate::Ry(q, params[base + 2 * q]));
            gates.push(Gate::Rz(q, params[base + 2 * q + 1]));
        }
        if n > 1 {
            for q in 0..n {
                let target = (q + 1) % n;
                gates.push(Gate::Cnot { control: q, target });
            }
        }
    }
    gates.extend(qft_gates(0..n)?);
    Ok(gates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuanvLayer {
    pub patch_size: usize,
    pub stride: usize,
    pub filters: Vec<QuanvFilter>,
    pub encoding: Encoding,
    pub pooling: Pooling,
    pub activation: Activation,
}

impl QuanvLayer {
    pub fn new(
        patch_size: usize,
        stride: usize,
        filters: Vec<QuanvFilter>,
        encoding: Encoding,
        pooling: Pooling,
        activation: Activation,
    ) -> Result<Self> {
        let layer = Self {
            patch_size,
            stride,
            filters,
            encoding,
            pooling,
            activation,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// `n_filters` random filters with `ansatz_layers` layers each, angle
    /// encoding, expectation pooling and no activation.
    pub fn random<R: Rng>(
        patch_size: usize,
        stride: usize,
        n_filters: usize,
        ansatz_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let n = patch_size * patch_size;
        let filters = (0..n_filters)
            .map(|_| QuanvFilter::random(n, ansatz_layers, rng))
            .collect::<Result<_>>()?;
        Self::new(
            patch_size,
            stride,
            filters,
            Encoding::Angle,
            Pooling::Expectation,
            Activation::None,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.stride == 0 {
            return Err(Error::arg("patch size and stride must be ≥ 1"));
        }
        if self.filters.is_empty() {
            return Err(Error::arg("quanvolution layer needs at least one filter"));
        }
        let n = self.patch_size * self.patch_size;
        if let Some(f) = self.filters.iter().find(|f| f.n_qubits != n) {
            return Err(Error::arg(format!(
                "filter has {} qubits but patch needs {n}",
                f.n_qubits
            )));
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn param_count(&self) -> usize {
        self.filters.iter().map(|f| f.params.len()).sum()
    }
}

/// Row-major flattened patches plus the output grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct Patches {
    pub patches: Vec<Vec<f64>>,
    pub rows: usize,
    pub cols: usize,
}

pub fn extract_patches(image: &FeatureTensor, patch_size: usize, stride: usize) -> Result<Patches> {
    if image.channels() != 1 {
        return Err(Error::arg(format!(
            "patch extraction needs one channel, got {}",
            image.channels()
        )));
    }
    if patch_size == 0 || stride == 0 {
        return Err(Error::arg("patch size and stride must be ≥ 1"));
    }
    let (h, w) = (image.height(), image.width());
    if h < patch_size || w < patch_size {
        return Err(Error::arg(format!(
            "{h}×{w} image is smaller than a {patch_size}×{patch_size} patch"
        )));
    }
    let rows = (h - patch_size) / stride + 1;
    let cols = (w - patch_size) / stride + 1;
    let mut patches = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut p = Vec::with_capacity(patch_size * patch_size);
            for dy in 0..patch_size {
                for dx in 0..patch_size {
                    p.push(image.get(0, i * stride + dy, j * stride + dx));
                }
            }
            patches.push(p);
        }
    }
    Ok(Patches {
        patches,
        rows,
        cols,
    })
}

pub fn encode_patch(patch: &[f64], encoding: Encoding) -> Result<Statevector> {
    if let Some(v) = patch.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::arg(format!("patch value {v} outside [0, 1]")));
    }
    match encoding {
        Encoding::Angle => Statevector::from_angles(patch),
        Encoding::Basis => {
            let bits: Vec<u8> = patch.iter().map(|&v| u8::from(v >= 0.5)).collect();
            Statevector::from_bits(&bits)
        }
    }
}

/// Decodes a measured register into classical values.
pub fn quantum_pool(state: &Statevector, mode: Pooling) -> Vec<f64> {
    match mode {
        Pooling::Expectation => state.expectations_z(),
        Pooling::Amplitude => {
            let mut transformed = state.clone();
            transformed
                .qft(0..state.n_qubits())
                .expect("register is non-empty");
            transformed
                .probabilities()
                .chunks(2)
                .map(|pair| pair.iter().sum())
                .collect()
        }
        Pooling::Max | Pooling::Mean | Pooling::Median => {
            let e = state.expectations_z();
            vec![reduce_stat(&e, mode).0]
        }
    }
}

/// Statistic over expectations, plus the weight each input carries in it
/// (the local derivative of the statistic).
fn reduce_stat(values: &[f64], mode: Pooling) -> (f64, Vec<f64>) {
    let n = values.len();
    let mut weights = vec![0.0; n];
    match mode {
        Pooling::Max => {
            let k = argmax(values);
            weights[k] = 1.0;
            (values[k], weights)
        }
        Pooling::Mean => {
            weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
            (values.iter().sum::<f64>() / n as f64, weights)
        }
        Pooling::Median => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
            if n % 2 == 1 {
                let k = order[n / 2];
                weights[k] = 1.0;
                (values[k], weights)
            } else {
                let (a, b) = (order[n / 2 - 1], order[n / 2]);
                weights[a] = 0.5;
                weights[b] += 0.5;
                ((values[a] + values[b]) / 2.0, weights)
            }
        }
        Pooling::Expectation | Pooling::Amplitude => unreachable!("not a statistic"),
    }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > values[best] { i } else { best })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Classical nonlinearity applied to measured values.
pub fn q_activation(values: &[f64], kind: Activation) -> Result<Vec<f64>> {
    Ok(match kind {
        Activation::None => values.to_vec(),
        Activation::QRelu => values.iter().map(|&v| v.max(0.0)).collect(),
        Activation::QSigmoid => values.iter().map(|&v| sigmoid(v)).collect(),
        Activation::QSoftmax => {
            if values.is_empty() {
                return Err(Error::arg("softmax of an empty vector"));
            }
            let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = values.iter().map(|v| (v - m).exp()).collect();
            let total: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / total).collect()
        }
    })
}

/// Collapses activated values to the layer's scalar output and returns the
/// derivative of that scalar with respect to each pre-activation value.
///
/// Softmax outputs always average to `1/len`, so that case reports its
/// peak probability instead of the mean.
fn readout(pooled: &[f64], kind: Activation) -> Result<(f64, Vec<f64>)> {
    let activated = q_activation(pooled, kind)?;
    let m = pooled.len() as f64;
    Ok(match kind {
        Activation::None => (activated.iter().sum::<f64>() / m, vec![1.0 / m; pooled.len()]),
        Activation::QRelu => (
            activated.iter().sum::<f64>() / m,
            pooled
                .iter()
                .map(|&v| if v > 0.0 { 1.0 / m } else { 0.0 })
                .collect(),
        ),
        Activation::QSigmoid => (
            activated.iter().sum::<f64>() / m,
            activated.iter().map(|s| s * (1.0 - s) / m).collect(),
        ),
        Activation::QSoftmax => {
            let k = argmax(&activated);
            let sk = activated[k];
            let grads = activated
                .iter()
                .enumerate()
                .map(|(i, si)| sk * (f64::from(u8::from(i == k)) - si))
                .collect();
            (sk, grads)
        }
    })
}

fn run_filter(
    input: &Statevector,
    n: usize,
    layers: usize,
    params: &[f64],
) -> Result<Statevector> {
    let mut state = input.clone();
    for gate in filter_gates(n, layers, params)? {
        state.apply(&gate)?;
    }
    Ok(state)
}

fn check_patch(patch: &[f64], layer: &QuanvLayer) -> Result<()> {
    let n = layer.n_qubits();
    if patch.len() != n {
        return Err(Error::arg(format!(
            "patch has {} values, layer expects {n}",
            patch.len()
        )));
    }
    Ok(())
}

fn filter_at(layer: &QuanvLayer, filter_index: usize) -> Result<&QuanvFilter> {
    layer.filters.get(filter_index).ok_or(Error::Index {
        index: filter_index,
        limit: layer.filters.len(),
    })
}

/// Scalar feature for one patch under one filter.
pub fn quanv_forward(patch: &[f64], layer: &QuanvLayer, filter_index: usize) -> Result<f64> {
    check_patch(patch, layer)?;
    let filter = filter_at(layer, filter_index)?;
    let input = encode_patch(patch, layer.encoding)?;
    let state = run_filter(&input, filter.n_qubits, filter.ansatz_layers, &filter.params)?;
    let pooled = quantum_pool(&state, layer.pooling);
    Ok(readout(&pooled, layer.activation)?.0)
}

pub fn layer_forward(image: &FeatureTensor, layer: &QuanvLayer) -> Result<FeatureTensor> {
    layer.validate()?;
    let grid = extract_patches(image, layer.patch_size, layer.stride)?;
    let plane = grid.rows * grid.cols;
    let mut values = vec![0.0; layer.filters.len() * plane];
    for (p, patch) in grid.patches.iter().enumerate() {
        let input = encode_patch(patch, layer.encoding)?;
        for (c, filter) in layer.filters.iter().enumerate() {
            let state = run_filter(&input, filter.n_qubits, filter.ansatz_layers, &filter.params)?;
            let pooled = quantum_pool(&state, layer.pooling);
            values[c * plane + p] = readout(&pooled, layer.activation)?.0;
        }
    }
    FeatureTensor::from_values(layer.filters.len(), grid.rows, grid.cols, values)
}

/// Derivative of the pooled vector with respect to one rotation angle,
/// from the two shifted evaluations.
fn pooled_derivative(
    input: &Statevector,
    filter: &QuanvFilter,
    param_index: usize,
    mode: Pooling,
    center: &Statevector,
) -> Result<Vec<f64>> {
    let mut shifted = filter.params.clone();
    shifted[param_index] += FRAC_PI_2;
    let plus = run_filter(input, filter.n_qubits, filter.ansatz_layers, &shifted)?;
    shifted[param_index] -= PI;
    let minus = run_filter(input, filter.n_qubits, filter.ansatz_layers, &shifted)?;
    Ok(match mode {
        Pooling::Expectation | Pooling::Amplitude => {
            let (a, b) = (quantum_pool(&plus, mode), quantum_pool(&minus, mode));
            a.iter().zip(&b).map(|(x, y)| (x - y) / 2.0).collect()
        }
        Pooling::Max | Pooling::Mean | Pooling::Median => {
            // Shift rule on each expectation, weighted by the statistic's
            // selection at the unshifted angle.
            let (_, weights) = reduce_stat(&center.expectations_z(), mode);
            let (a, b) = (plus.expectations_z(), minus.expectations_z());
            let d = a
                .iter()
                .zip(&b)
                .zip(&weights)
                .map(|((x, y), w)| w * (x - y) / 2.0)
                .sum();
            vec![d]
        }
    })
}

/// Parameter-shift derivative of the pre-activation scalar output (the mean
/// of the pooled values) with respect to `params[param_index]` of the chosen
/// filter. Activations are chained by the caller.
pub fn param_shift_grad(
    patch: &[f64],
    layer: &QuanvLayer,
    filter_index: usize,
    param_index: usize,
) -> Result<f64> {
    check_patch(patch, layer)?;
    let filter = filter_at(layer, filter_index)?;
    if param_index >= filter.params.len() {
        return Err(Error::Index {
            index: param_index,
            limit: filter.params.len(),
        });
    }
    let input = encode_patch(patch, layer.encoding)?;
    let center = run_filter(&input, filter.n_qubits, filter.ansatz_layers, &filter.params)?;
    let d = pooled_derivative(&input, filter, param_index, layer.pooling, &center)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Output value and its gradient with respect to every parameter of one
/// filter, activation included.
pub fn output_with_grad(
    patch: &[f64],
    layer: &QuanvLayer,
    filter_index: usize,
) -> Result<(f64, Vec<f64>)> {
    check_patch(patch, layer)?;
    let filter = filter_at(layer, filter_index)?;
    let input = encode_patch(patch, layer.encoding)?;
    filter_output_with_grad(&input, filter, layer)
}

pub(crate) fn filter_output_with_grad(
    input: &Statevector,
    filter: &QuanvFilter,
    layer: &QuanvLayer,
) -> Result<(f64, Vec<f64>)> {
    let center = run_filter(input, filter.n_qubits, filter.ansatz_layers, &filter.params)?;
    let pooled = quantum_pool(&center, layer.pooling);
    let (value, upstream) = readout(&pooled, layer.activation)?;
    let mut grad = Vec::with_capacity(filter.params.len());
    for p in 0..filter.params.len() {
        let d = pooled_derivative(input, filter, p, layer.pooling, &center)?;
        grad.push(d.iter().zip(&upstream).map(|(a, b)| a * b).sum());
    }
    Ok((value, grad))
}
