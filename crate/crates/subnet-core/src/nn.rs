//! Dense feed-forward networks with manual backpropagation.
//!
//! Layers compute `y = act(W x + b)` with `W` stored as `out x in`. The
//! forward pass over a batch returns raw pre-softmax logits (the last layer
//! is conventionally `Identity`); `softmax`/`cross_entropy` sit on top and
//! `backward` differentiates mean cross-entropy of the softmaxed logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, salt};

/// Probabilities below this are clamped before taking logs, so confident
/// wrong predictions score a large finite loss instead of infinity.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y = act(x)`.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Identity),
            other => Err(Error::Format(format!("unknown activation tag {other}"))),
        }
    }
}

/// One dense layer: weights `out x in`, bias of length `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape(format!(
                "bias length {} != weight rows {}",
                bias.len(),
                weights.rows()
            )));
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bias entry".into()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Fully connected network; adjacent layer dimensions must chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
}

impl DenseNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[1].in_dim() != w[0].out_dim() {
                return Err(Error::shape(format!(
                    "layer dims do not chain: {} -> {}",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform initialization (`±sqrt(6/(fan_in+fan_out))`); hidden
    /// layers get `hidden`, the final layer is `Identity`.
    pub fn init(dims: &[usize], hidden: Activation, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("need at least input and output dims"));
        }
        let mut rng = rng::stream(seed, &[salt::INIT]);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..=bound))
                .collect();
            let act = if i + 1 == dims.len() - 1 {
                Activation::Identity
            } else {
                hidden
            };
            layers.push(DenseLayer::new(
                Matrix::new(fan_out, fan_in, data)?,
                vec![0.0; fan_out],
                act,
            )?);
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weights().shape()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights().len()).sum()
    }

    /// Batch forward pass; returns raw logits, one row per sample.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let mut act = batch.clone();
        for layer in &self.layers {
            act = layer_forward(layer, &act);
        }
        Ok(act)
    }

    /// Forward pass keeping every layer's post-activation output.
    /// `trace[0]` is the input batch, `trace[i]` the output of layer `i-1`.
    pub(crate) fn forward_trace(&self, batch: &Matrix) -> Result<Vec<Matrix>> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape("trace input width"));
        }
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(batch.clone());
        for layer in &self.layers {
            let next = layer_forward(layer, trace.last().unwrap());
            trace.push(next);
        }
        Ok(trace)
    }

    /// Softmax class probabilities for a batch.
    pub fn predict_probs(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(softmax_rows(&self.forward(batch)?))
    }
}

fn layer_forward(layer: &DenseLayer, input: &Matrix) -> Matrix {
    let (out_dim, in_dim) = layer.weights.shape();
    let n = input.rows();
    let mut out = Matrix::zeros(n, out_dim);
    for i in 0..n {
        let x = input.row(i);
        let row = out.row_mut(i);
        for (o, slot) in row.iter_mut().enumerate() {
            let w = layer.weights.row(o);
            let mut z = layer.bias[o];
            for j in 0..in_dim {
                z += w[j] * x[j];
            }
            *slot = layer.activation.apply(z);
        }
    }
    out
}

/// Numerically stable softmax of a single logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let sm = softmax(row);
        row.copy_from_slice(&sm);
    }
    out
}

/// Mean negative log probability of the true class.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} prob rows vs {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    let classes = probs.cols();
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::config(format!(
                "label {label} out of range for {classes} classes"
            )));
        }
        total -= probs.get(i, label).max(LOG_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Per-layer gradients, shape-identical to a network.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Gradient {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradient {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.all_finite() && l.bias.iter().all(|v| v.is_finite()))
    }
}

/// Mean softmax cross-entropy loss and its gradient over a batch.
pub fn backward(net: &DenseNet, batch: &Matrix, labels: &[usize]) -> Result<(f64, Gradient)> {
    backward_with_probs(net, batch, labels).map(|(loss, grad, _)| (loss, grad))
}

pub(crate) fn backward_with_probs(
    net: &DenseNet,
    batch: &Matrix,
    labels: &[usize],
) -> Result<(f64, Gradient, Matrix)> {
    if batch.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} batch rows vs {} labels",
            batch.rows(),
            labels.len()
        )));
    }
    let trace = net.forward_trace(batch)?;
    let logits = trace.last().unwrap();
    let probs = softmax_rows(logits);
    let loss = cross_entropy(&probs, labels)?;

    let n = batch.rows();
    let classes = net.output_dim();
    // delta = d loss / d z for the current layer, one row per sample.
    let mut delta = Matrix::zeros(n, classes);
    let last = net.layers().len() - 1;
    let last_act = net.layers()[last].activation();
    for i in 0..n {
        let p = probs.row(i);
        let out = trace[last + 1].row(i);
        let row = delta.row_mut(i);
        for c in 0..classes {
            let e = (p[c] - if labels[i] == c { 1.0 } else { 0.0 }) / n as f64;
            row[c] = e * last_act.grad_from_output(out[c]);
        }
    }

    let mut grads = vec![None; net.layers().len()];
    for l in (0..net.layers().len()).rev() {
        let input = &trace[l];
        let layer = &net.layers()[l];
        let (out_dim, in_dim) = layer.weights().shape();

        let mut gw = Matrix::zeros(out_dim, in_dim);
        let mut gb = vec![0.0; out_dim];
        for i in 0..n {
            let d = delta.row(i);
            let x = input.row(i);
            for o in 0..out_dim {
                let gr = gw.row_mut(o);
                for j in 0..in_dim {
                    gr[j] += d[o] * x[j];
                }
                gb[o] += d[o];
            }
        }
        grads[l] = Some(LayerGrad {
            weights: gw,
            bias: gb,
        });

        if l > 0 {
            let prev_act = net.layers()[l - 1].activation();
            let mut prev_delta = Matrix::zeros(n, in_dim);
            for i in 0..n {
                let d = delta.row(i);
                let a = trace[l].row(i);
                let row = prev_delta.row_mut(i);
                for j in 0..in_dim {
                    let mut s = 0.0;
                    for o in 0..out_dim {
                        s += d[o] * layer.weights().get(o, j);
                    }
                    row[j] = s * prev_act.grad_from_output(a[j]);
                }
            }
            delta = prev_delta;
        }
    }

    let grad = Gradient {
        layers: grads.into_iter().map(Option::unwrap).collect(),
    };
    Ok((loss, grad, probs))
}

/// Backpropagate a delta on layer `layer_idx`'s pre-activation down to the
/// network input. `delta` has one entry per unit of that layer.
pub(crate) fn backprop_delta_to_input(
    net: &DenseNet,
    activations: &[Vec<f64>],
    layer_idx: usize,
    delta: Vec<f64>,
) -> Vec<f64> {
    let mut delta = delta;
    // Walk from layer_idx down to layer 0; activations[l] is the input to
    // layer l.
    for l in (0..=layer_idx).rev() {
        let layer = &net.layers()[l];
        let (out_dim, in_dim) = layer.weights().shape();
        let mut prev = vec![0.0; in_dim];
        for (j, slot) in prev.iter_mut().enumerate() {
            let mut s = 0.0;
            for o in 0..out_dim {
                s += delta[o] * layer.weights().get(o, j);
            }
            *slot = s;
        }
        if l > 0 {
            let below = &net.layers()[l - 1];
            for (j, slot) in prev.iter_mut().enumerate() {
                *slot *= below.activation().grad_from_output(activations[l][j]);
            }
        }
        delta = prev;
    }
    delta
}

/// Per-layer unit activations for a single input, where `out[l]` is the
/// input to layer `l` and the last entry is the network output.
pub(crate) fn forward_single_trace(net: &DenseNet, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let batch = Matrix::new(1, x.len(), x.to_vec())?;
    let trace = net.forward_trace(&batch)?;
    Ok(trace.into_iter().map(|m| m.row(0).to_vec()).collect())
}
