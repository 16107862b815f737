//! Output-space diversity metrics and interpretability probes: pairwise
//! correlation/KL/disagreement matrices, input-gradient saliency,
//! SmoothGrad, activation-maximizing inputs, and loss-landscape slices.

use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::mean_kl;
use crate::nn::{self, DenseNet, Gradient, LayerGrad};
use crate::rng::{self, salt};
use crate::train::argmax;

/// Columns whose variance falls below this are treated as constant and
/// excluded from correlation.
const VARIANCE_FLOOR: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    /// Mean Pearson correlation over included classes.
    pub mean: f64,
    /// Classes skipped because one side had (numerically) zero variance.
    pub excluded_classes: Vec<usize>,
}

/// Mean per-class Pearson correlation of two output matrices, computed
/// across the sample axis for each class and averaged over classes.
pub fn pairwise_correlation(a: &Matrix, b: &Matrix) -> Result<Correlation> {
    if a.shape() != b.shape() {
        return Err(Error::shape("correlation operands differ in shape"));
    }
    let (n, classes) = a.shape();
    if n < 2 {
        return Err(Error::config("correlation needs at least two samples"));
    }
    let mut total = 0.0;
    let mut included = 0usize;
    let mut excluded = Vec::new();
    for c in 0..classes {
        let mean_a: f64 = (0..n).map(|i| a.get(i, c)).sum::<f64>() / n as f64;
        let mean_b: f64 = (0..n).map(|i| b.get(i, c)).sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut var_a = 0.0;
        let mut var_b = 0.0;
        for i in 0..n {
            let da = a.get(i, c) - mean_a;
            let db = b.get(i, c) - mean_b;
            cov += da * db;
            var_a += da * da;
            var_b += db * db;
        }
        if var_a <= VARIANCE_FLOOR || var_b <= VARIANCE_FLOOR {
            excluded.push(c);
            continue;
        }
        total += cov / (var_a.sqrt() * var_b.sqrt());
        included += 1;
    }
    if included == 0 {
        return Err(Error::config(
            "all class outputs are constant; correlation undefined",
        ));
    }
    Ok(Correlation {
        mean: total / included as f64,
        excluded_classes: excluded,
    })
}

/// Fraction of samples on which the two argmax predictions differ.
pub fn prediction_disagreement(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("disagreement operands differ in shape"));
    }
    let n = a.rows();
    let disagreements = (0..n)
        .filter(|&i| argmax(a.row(i)) != argmax(b.row(i)))
        .count();
    Ok(disagreements as f64 / n as f64)
}

/// Pairwise diversity matrices over ensemble member outputs.
#[derive(Debug, Clone)]
pub struct DiversityReport {
    pub correlation: Matrix,
    pub kl: Matrix,
    pub pdr: Matrix,
    pub correlation_mean: f64,
    pub correlation_se: f64,
    pub kl_mean: f64,
    pub kl_se: f64,
    pub pdr_mean: f64,
    pub pdr_se: f64,
    /// `(i, j, class)` triples excluded from correlation for zero variance.
    pub excluded: Vec<(usize, usize, usize)>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Full pairwise report: correlation and PDR over unordered pairs, KL over
/// ordered pairs (it is asymmetric). Diagonals are 1, 0, 0 by definition.
pub fn diversity_report(member_probs: &[Matrix]) -> Result<DiversityReport> {
    let k = member_probs.len();
    if k < 2 {
        return Err(Error::config("diversity report needs at least two members"));
    }
    let mut correlation = Matrix::zeros(k, k);
    let mut kl = Matrix::zeros(k, k);
    let mut pdr = Matrix::zeros(k, k);
    let mut excluded = Vec::new();
    let mut corr_vals = Vec::new();
    let mut kl_vals = Vec::new();
    let mut pdr_vals = Vec::new();

    for i in 0..k {
        correlation.set(i, i, 1.0);
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = mean_kl(&member_probs[i], &member_probs[j])?;
            kl.set(i, j, d);
            kl_vals.push(d);
            if i < j {
                let corr = pairwise_correlation(&member_probs[i], &member_probs[j])?;
                for c in corr.excluded_classes {
                    excluded.push((i, j, c));
                }
                correlation.set(i, j, corr.mean);
                correlation.set(j, i, corr.mean);
                corr_vals.push(corr.mean);
                let p = prediction_disagreement(&member_probs[i], &member_probs[j])?;
                pdr.set(i, j, p);
                pdr.set(j, i, p);
                pdr_vals.push(p);
            }
        }
    }

    let (correlation_mean, correlation_se) = mean_se(&corr_vals);
    let (kl_mean, kl_se) = mean_se(&kl_vals);
    let (pdr_mean, pdr_se) = mean_se(&pdr_vals);
    Ok(DiversityReport {
        correlation,
        kl,
        pdr,
        correlation_mean,
        correlation_se,
        kl_mean,
        kl_se,
        pdr_mean,
        pdr_se,
        excluded,
    })
}

/// Gradient of the class-`c` logit with respect to the input; `c` defaults
/// to the predicted class.
pub fn saliency(net: &DenseNet, x: &[f64], class: Option<usize>) -> Result<Vec<f64>> {
    if x.len() != net.input_dim() {
        return Err(Error::shape(format!(
            "input length {} vs network input {}",
            x.len(),
            net.input_dim()
        )));
    }
    let activations = nn::forward_single_trace(net, x)?;
    let output = activations.last().unwrap();
    let c = match class {
        Some(c) if c < net.output_dim() => c,
        Some(c) => {
            return Err(Error::config(format!(
                "class {c} out of range for {} outputs",
                net.output_dim()
            )))
        }
        None => argmax(output),
    };
    let last = net.layers().len() - 1;
    let mut delta = vec![0.0; net.output_dim()];
    // Delta on the last layer's pre-activation via the activation slope.
    delta[c] = net.layers()[last].activation().grad_from_output(output[c]);
    Ok(nn::backprop_delta_to_input(net, &activations, last, delta))
}

/// Saliency averaged over `n` Gaussian input perturbations. The class is
/// fixed at the prediction for the unperturbed input unless given.
pub fn smoothgrad(
    net: &DenseNet,
    x: &[f64],
    class: Option<usize>,
    sigma: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::config("smoothgrad needs n >= 1"));
    }
    let resolved = match class {
        Some(c) => c,
        None => {
            let activations = nn::forward_single_trace(net, x)?;
            argmax(activations.last().unwrap())
        }
    };
    if sigma == 0.0 {
        return saliency(net, x, Some(resolved));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = rng::stream(seed, &[salt::SMOOTH]);
    let mut acc = vec![0.0; x.len()];
    let mut perturbed = vec![0.0; x.len()];
    for _ in 0..n {
        for (p, &v) in perturbed.iter_mut().zip(x) {
            *p = v + normal.sample(&mut rng);
        }
        let g = saliency(net, &perturbed, Some(resolved))?;
        for (a, v) in acc.iter_mut().zip(g) {
            *a += v;
        }
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    Ok(acc)
}

/// Gradient-ascent input that maximizes one unit's pre-activation, with the
/// iterate projected back onto the L2 ball of radius `l2_bound` each step.
/// Returns the final input and the pre-activation value at every step
/// (including the initial point).
pub fn feature_visualization(
    net: &DenseNet,
    unit: (usize, usize),
    steps: usize,
    step_size: f64,
    l2_bound: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (layer, neuron) = unit;
    if layer >= net.layers().len() || neuron >= net.layers()[layer].out_dim() {
        return Err(Error::config(format!(
            "unit ({layer},{neuron}) is not in the network"
        )));
    }
    if !(l2_bound > 0.0) {
        return Err(Error::config("l2_bound must be positive"));
    }
    let dim = net.input_dim();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = rng::stream(seed, &[salt::FEATURE]);
    let mut x: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
    project_ball(&mut x, l2_bound);

    let pre_activation = |x: &[f64]| -> Result<f64> {
        let activations = nn::forward_single_trace(net, x)?;
        // Recompute the unit's pre-activation from the layer input.
        let input = &activations[layer];
        let l = &net.layers()[layer];
        let mut z = l.bias()[neuron];
        for (j, v) in input.iter().enumerate() {
            z += l.weights().get(neuron, j) * v;
        }
        Ok(z)
    };

    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(pre_activation(&x)?);
    for _ in 0..steps {
        let activations = nn::forward_single_trace(net, &x)?;
        let mut delta = vec![0.0; net.layers()[layer].out_dim()];
        delta[neuron] = 1.0;
        let grad = nn::backprop_delta_to_input(net, &activations, layer, delta);
        for (xv, g) in x.iter_mut().zip(grad) {
            *xv += step_size * g;
        }
        project_ball(&mut x, l2_bound);
        trace.push(pre_activation(&x)?);
    }
    Ok((x, trace))
}

fn project_ball(x: &mut [f64], radius: f64) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > radius {
        let scale = radius / norm;
        for v in x {
            *v *= scale;
        }
    }
}

/// Random Gaussian direction pair for [`landscape_slice`]: per-layer
/// Gram-Schmidt orthogonalized, then scaled so each layer's direction norm
/// matches that layer's parameter norm.
pub fn default_directions(net: &DenseNet, seed: u64) -> (Gradient, Gradient) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = rng::stream(seed, &[salt::DIRECTION]);
    let mut delta = Gradient::zeros_like(net);
    let mut eta = Gradient::zeros_like(net);
    for (l, layer) in net.layers().iter().enumerate() {
        let d = &mut delta.layers[l];
        for v in d.weights.as_mut_slice() {
            *v = normal.sample(&mut rng);
        }
        for v in &mut d.bias {
            *v = normal.sample(&mut rng);
        }
        let e = &mut eta.layers[l];
        for v in e.weights.as_mut_slice() {
            *v = normal.sample(&mut rng);
        }
        for v in &mut e.bias {
            *v = normal.sample(&mut rng);
        }

        // Orthogonalize eta against delta within the layer.
        let dot = layer_dot(d, e);
        let dd = layer_dot(d, d);
        if dd > 0.0 {
            let coeff = dot / dd;
            for (ev, dv) in e
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(d.weights.as_slice())
            {
                *ev -= coeff * dv;
            }
            for (ev, dv) in e.bias.iter_mut().zip(&d.bias) {
                *ev -= coeff * dv;
            }
        }

        // Match each direction's layer norm to the parameter norm.
        let param_norm = (layer.weights().norm().powi(2)
            + layer.bias().iter().map(|v| v * v).sum::<f64>())
        .sqrt();
        for dir in [d, e] {
            let norm = (dir.weights.norm().powi(2)
                + dir.bias.iter().map(|v| v * v).sum::<f64>())
            .sqrt();
            if norm > 0.0 {
                let scale = param_norm / norm;
                for v in dir.weights.as_mut_slice() {
                    *v *= scale;
                }
                for v in &mut dir.bias {
                    *v *= scale;
                }
            }
        }
    }
    (delta, eta)
}

fn layer_dot(a: &LayerGrad, b: &LayerGrad) -> f64 {
    a.weights
        .as_slice()
        .iter()
        .zip(b.weights.as_slice())
        .map(|(x, y)| x * y)
        .sum::<f64>()
        + a.bias.iter().zip(&b.bias).map(|(x, y)| x * y).sum::<f64>()
}

/// Cross-entropy loss surface over `theta + alpha * delta + beta * eta`.
/// Rows index `alphas`, columns index `betas`.
pub fn landscape_slice(
    net: &DenseNet,
    data: &Dataset,
    delta: &Gradient,
    eta: &Gradient,
    alphas: &[f64],
    betas: &[f64],
) -> Result<Matrix> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(Error::config("landscape grid must be non-empty"));
    }
    if delta.layers.len() != net.layers().len() || eta.layers.len() != net.layers().len() {
        return Err(Error::shape("direction layer count"));
    }
    for (l, layer) in net.layers().iter().enumerate() {
        for dir in [delta, eta] {
            if dir.layers[l].weights.shape() != layer.weights().shape()
                || dir.layers[l].bias.len() != layer.bias().len()
            {
                return Err(Error::shape(format!("direction shape at layer {l}")));
            }
        }
    }

    let mut out = Matrix::zeros(alphas.len(), betas.len());
    for (ai, &alpha) in alphas.iter().enumerate() {
        for (bi, &beta) in betas.iter().enumerate() {
            let mut perturbed = net.clone();
            for (l, layer) in perturbed.layers_mut().iter_mut().enumerate() {
                let dw = &delta.layers[l].weights;
                let ew = &eta.layers[l].weights;
                for (i, wv) in layer.weights_mut().as_mut_slice().iter_mut().enumerate() {
                    let step = alpha * dw.as_slice()[i] + beta * ew.as_slice()[i];
                    if step != 0.0 {
                        *wv += step;
                    }
                }
                let db = &delta.layers[l].bias;
                let eb = &eta.layers[l].bias;
                for (i, bv) in layer.bias_mut().iter_mut().enumerate() {
                    let step = alpha * db[i] + beta * eb[i];
                    if step != 0.0 {
                        *bv += step;
                    }
                }
            }
            let probs = perturbed.predict_probs(&data.inputs)?;
            out.set(ai, bi, nn::cross_entropy(&probs, &data.labels)?);
        }
    }
    Ok(out)
}
