//! Subnetwork masks: sampling, neural partitioning, application, and
//! mask-space distances.
//!
//! A mask bit of 1 retains the matching weight; 0 removes it. Masks cover
//! weight matrices only — biases are never masked. Structured sampling works
//! at output-neuron granularity (whole weight rows).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::DenseNet;
use crate::rng::{self, salt};

/// Binary mask aligned with one layer's weight matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::shape(format!(
                "mask {rows}x{cols} needs {} bits, got {}",
                rows * cols,
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::config("mask bits must be 0 or 1"));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![1; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, bit: u8) {
        debug_assert!(bit <= 1);
        self.bits[r * self.cols + c] = bit;
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [u8] {
        &mut self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count_ones() as f64 / self.bits.len() as f64
        }
    }

    pub fn complement(&self) -> Mask {
        Mask {
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().map(|&b| 1 - b).collect(),
        }
    }
}

/// One mask per layer of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetMask {
    layers: Vec<Mask>,
}

impl NetMask {
    pub fn new(layers: Vec<Mask>) -> Self {
        Self { layers }
    }

    pub fn ones(shapes: &[(usize, usize)]) -> Self {
        Self {
            layers: shapes.iter().map(|&(r, c)| Mask::ones(r, c)).collect(),
        }
    }

    pub fn zeros(shapes: &[(usize, usize)]) -> Self {
        Self {
            layers: shapes.iter().map(|&(r, c)| Mask::zeros(r, c)).collect(),
        }
    }

    pub fn layers(&self) -> &[Mask] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Mask] {
        &mut self.layers
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(Mask::shape).collect()
    }

    pub fn total_bits(&self) -> usize {
        self.layers.iter().map(Mask::len).sum()
    }

    pub fn count_ones(&self) -> usize {
        self.layers.iter().map(Mask::count_ones).sum()
    }

    pub fn density(&self) -> f64 {
        let total = self.total_bits();
        if total == 0 {
            0.0
        } else {
            self.count_ones() as f64 / total as f64
        }
    }

    pub fn matches_net(&self, net: &DenseNet) -> bool {
        self.shapes() == net.weight_shapes()
    }
}

/// Bitwise complement of every layer mask (Neural Partitioning's anti-mask).
pub fn anti_mask(mask: &NetMask) -> NetMask {
    NetMask {
        layers: mask.layers.iter().map(Mask::complement).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Granularity {
    /// Independent bit per weight.
    Unstructured,
    /// Whole output-neuron rows kept or removed together.
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    /// Sample each layer independently.
    Layerwise,
    /// Select exactly `round(density * total)` bits over the whole network.
    Global,
}

/// How to draw a subnetwork mask. `sparsity` is the fraction of weights
/// removed; the Bernoulli retention probability is `1 - sparsity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub sparsity: f64,
    pub granularity: Granularity,
    pub scope: Scope,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn unstructured(sparsity: f64, seed: u64) -> Self {
        Self {
            sparsity,
            granularity: Granularity::Unstructured,
            scope: Scope::Layerwise,
            seed,
        }
    }

    pub fn structured(sparsity: f64, seed: u64) -> Self {
        Self {
            sparsity,
            granularity: Granularity::Structured,
            scope: Scope::Layerwise,
            seed,
        }
    }

    pub fn global_unstructured(sparsity: f64, seed: u64) -> Self {
        Self {
            sparsity,
            granularity: Granularity::Unstructured,
            scope: Scope::Global,
            seed,
        }
    }

    /// Retention probability.
    pub fn density(&self) -> f64 {
        1.0 - self.sparsity
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::config(format!(
                "sparsity {} not in [0,1]",
                self.sparsity
            )));
        }
        if self.granularity == Granularity::Structured && self.scope == Scope::Global {
            return Err(Error::config(
                "structured + global masking is not supported",
            ));
        }
        Ok(())
    }
}

/// Draw a subnetwork mask over the given weight shapes.
pub fn sample_mask(spec: &SamplerSpec, shapes: &[(usize, usize)]) -> Result<NetMask> {
    spec.validate()?;
    let density = spec.density();
    let mut rng = rng::stream(spec.seed, &[salt::MASK]);
    match (spec.granularity, spec.scope) {
        (Granularity::Unstructured, Scope::Layerwise) => {
            let layers = shapes
                .iter()
                .map(|&(r, c)| {
                    let bits = (0..r * c)
                        .map(|_| u8::from(rng.gen::<f64>() < density))
                        .collect();
                    Mask::new(r, c, bits).unwrap()
                })
                .collect();
            Ok(NetMask::new(layers))
        }
        (Granularity::Structured, Scope::Layerwise) => {
            let layers = shapes
                .iter()
                .map(|&(r, c)| {
                    let mut m = Mask::zeros(r, c);
                    for row in 0..r {
                        if rng.gen::<f64>() < density {
                            for col in 0..c {
                                m.set(row, col, 1);
                            }
                        }
                    }
                    m
                })
                .collect();
            Ok(NetMask::new(layers))
        }
        (Granularity::Unstructured, Scope::Global) => {
            let total: usize = shapes.iter().map(|&(r, c)| r * c).sum();
            let keep = (density * total as f64).round() as usize;
            let chosen = rand::seq::index::sample(&mut rng, total, keep.min(total));
            let mut flat = vec![0u8; total];
            for idx in chosen {
                flat[idx] = 1;
            }
            let mut offset = 0;
            let layers = shapes
                .iter()
                .map(|&(r, c)| {
                    let bits = flat[offset..offset + r * c].to_vec();
                    offset += r * c;
                    Mask::new(r, c, bits).unwrap()
                })
                .collect();
            Ok(NetMask::new(layers))
        }
        (Granularity::Structured, Scope::Global) => unreachable!("rejected by validate"),
    }
}

/// Split the parameter space into `k` pairwise-disjoint masks that cover
/// every weight; each parameter lands in one partition uniformly at random.
pub fn partition(k: usize, shapes: &[(usize, usize)], seed: u64) -> Result<Vec<NetMask>> {
    if k < 2 {
        return Err(Error::config("partition needs k >= 2"));
    }
    let mut rng = rng::stream(seed, &[salt::PARTITION]);
    let mut parts: Vec<NetMask> = (0..k).map(|_| NetMask::zeros(shapes)).collect();
    for (l, &(r, c)) in shapes.iter().enumerate() {
        for row in 0..r {
            for col in 0..c {
                let owner = rng.gen_range(0..k);
                parts[owner].layers_mut()[l].set(row, col, 1);
            }
        }
    }
    Ok(parts)
}

/// Hadamard application: weights keep their value where the bit is 1 and
/// become zero where it is 0. Biases are untouched.
pub fn apply_mask(net: &DenseNet, mask: &NetMask) -> Result<DenseNet> {
    if !mask.matches_net(net) {
        return Err(Error::shape("mask does not match network"));
    }
    let mut out = net.clone();
    mask_weights_in_place(&mut out, mask);
    Ok(out)
}

/// Like [`apply_mask`], but a fully masked weight row also zeroes the
/// neuron's bias, so structured (neuron-level) pruning removes the unit
/// outright.
pub fn apply_mask_structured(net: &DenseNet, mask: &NetMask) -> Result<DenseNet> {
    let mut out = apply_mask(net, mask)?;
    for (layer, m) in out.layers_mut().iter_mut().zip(mask.layers()) {
        let (rows, cols) = m.shape();
        for r in 0..rows {
            if (0..cols).all(|c| m.get(r, c) == 0) {
                layer.bias_mut()[r] = 0.0;
            }
        }
    }
    Ok(out)
}

pub(crate) fn mask_weights_in_place(net: &mut DenseNet, mask: &NetMask) {
    for (layer, m) in net.layers_mut().iter_mut().zip(mask.layers()) {
        let w = layer.weights_mut().as_mut_slice();
        for (wv, &bit) in w.iter_mut().zip(m.bits()) {
            if bit == 0 {
                *wv = 0.0;
            }
        }
    }
}

/// Square root of the number of disagreeing bits between two masks.
pub fn cartesian_distance(a: &NetMask, b: &NetMask) -> Result<f64> {
    if a.shapes() != b.shapes() {
        return Err(Error::shape("mask shapes differ"));
    }
    let mut disagreements = 0usize;
    for (ma, mb) in a.layers().iter().zip(b.layers()) {
        for (x, y) in ma.bits().iter().zip(mb.bits()) {
            disagreements += usize::from(x != y);
        }
    }
    Ok((disagreements as f64).sqrt())
}

/// Sum of Cartesian distances over all ordered pairs `(i, j), i != j`.
pub fn total_distance(masks: &[NetMask]) -> Result<f64> {
    if masks.len() < 2 {
        return Err(Error::config("total_distance needs at least 2 masks"));
    }
    let mut total = 0.0;
    for i in 0..masks.len() {
        for j in 0..masks.len() {
            if i != j {
                total += cartesian_distance(&masks[i], &masks[j])?;
            }
        }
    }
    Ok(total)
}
