//! Classification metrics over row-stochastic prediction matrices:
//! accuracy, NLL, ECE, and the divergence measures used to compare a
//! perturbed network against its parent.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::LOG_FLOOR;
use crate::train::argmax;

/// Model outputs (softmax probabilities) plus ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    probs: Matrix,
    labels: Vec<usize>,
}

impl PredictionSet {
    pub fn new(probs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if probs.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} prediction rows vs {} labels",
                probs.rows(),
                labels.len()
            )));
        }
        let classes = probs.cols();
        if labels.iter().any(|&l| l >= classes) {
            return Err(Error::config("label out of class range"));
        }
        for i in 0..probs.rows() {
            let sum: f64 = probs.row(i).iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self { probs, labels })
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Fraction of samples whose argmax matches the label (ties -> lowest
/// class index).
pub fn accuracy(ps: &PredictionSet) -> f64 {
    let correct = ps
        .labels
        .iter()
        .enumerate()
        .filter(|(i, &label)| argmax(ps.probs.row(*i)) == label)
        .count();
    correct as f64 / ps.len() as f64
}

/// Mean negative log probability of the true class (same floor as
/// cross-entropy).
pub fn nll(ps: &PredictionSet) -> f64 {
    crate::nn::cross_entropy(&ps.probs, &ps.labels).expect("validated prediction set")
}

/// Expected calibration error with `bins` equal-width confidence bins on
/// [0,1] (right-inclusive edges); empty bins contribute nothing.
pub fn ece(ps: &PredictionSet, bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::config("ece needs at least one bin"));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut correct = vec![0usize; bins];
    for (i, &label) in ps.labels.iter().enumerate() {
        let row = ps.probs.row(i);
        let pred = argmax(row);
        let confidence = row[pred];
        // Right-inclusive bins: (k/bins, (k+1)/bins]; confidence 0 lands in
        // the first bin.
        let bin = if confidence <= 0.0 {
            0
        } else {
            ((confidence * bins as f64).ceil() as usize - 1).min(bins - 1)
        };
        count[bin] += 1;
        conf_sum[bin] += confidence;
        correct[bin] += usize::from(pred == label);
    }
    let n = ps.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let acc = correct[b] as f64 / count[b] as f64;
        let conf = conf_sum[b] / count[b] as f64;
        total += count[b] as f64 / n * (acc - conf).abs();
    }
    Ok(total)
}

/// Mean over samples of `sum_c ref * log(ref / other)` with the log floor.
pub fn mean_kl(reference: &Matrix, perturbed: &Matrix) -> Result<f64> {
    if reference.shape() != perturbed.shape() {
        return Err(Error::shape("KL operands differ in shape"));
    }
    let mut total = 0.0;
    for i in 0..reference.rows() {
        for (p, q) in reference.row(i).iter().zip(perturbed.row(i)) {
            if *p > 0.0 {
                total += p * (p.max(LOG_FLOOR).ln() - q.max(LOG_FLOOR).ln());
            }
        }
    }
    Ok(total / reference.rows() as f64)
}

/// Mean over samples of the summed squared class differences.
pub fn mean_output_mse(reference: &Matrix, perturbed: &Matrix) -> Result<f64> {
    if reference.shape() != perturbed.shape() {
        return Err(Error::shape("MSE operands differ in shape"));
    }
    let mut total = 0.0;
    for (a, b) in reference.as_slice().iter().zip(perturbed.as_slice()) {
        total += (a - b) * (a - b);
    }
    Ok(total / reference.rows() as f64)
}
