//! Child-network generation: Gaussian noise mutation (plain, mirrored,
//! partitioned) and pruning (one-shot random, magnitude, iterative), plus
//! the freezing contract that keeps pruned weights at exactly zero.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::masking::{anti_mask, apply_mask, apply_mask_structured, NetMask};
use crate::nn::{DenseNet, Gradient};
use crate::optim::OptimizerState;
use crate::rng::{self, salt};
use crate::schedules::Schedule;
use crate::train::{train, TrainConfig, TrainHistory, TrainHook};

/// Gaussian noise parameters for sparse mutations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean: f64,
    pub strength: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(mean: f64, strength: f64, seed: u64) -> Result<Self> {
        if strength < 0.0 {
            return Err(Error::config(format!("noise strength {strength} < 0")));
        }
        Ok(Self {
            mean,
            strength,
            seed,
        })
    }

    pub fn centered(strength: f64, seed: u64) -> Result<Self> {
        Self::new(0.0, strength, seed)
    }
}

/// Marks pruned parameters: weights whose mask bit is 0 are held at zero by
/// zeroing their gradients during tuning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeSet {
    retained: NetMask,
}

impl FreezeSet {
    pub fn new(retained: NetMask) -> Self {
        Self { retained }
    }

    pub fn retained(&self) -> &NetMask {
        &self.retained
    }

    pub fn apply_to_gradient(&self, grad: &mut Gradient) {
        for (layer, mask) in grad.layers.iter_mut().zip(self.retained.layers()) {
            for (g, &bit) in layer.weights.as_mut_slice().iter_mut().zip(mask.bits()) {
                if bit == 0 {
                    *g = 0.0;
                }
            }
        }
    }
}

impl TrainHook for FreezeSet {
    fn filter_gradient(&mut self, grad: &mut Gradient) {
        self.apply_to_gradient(grad);
    }
}

/// Provenance of a derived network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent: String,
    pub index: usize,
}

impl Lineage {
    pub fn new(parent: impl Into<String>, index: usize) -> Self {
        Self {
            parent: parent.into(),
            index,
        }
    }
}

/// A network derived from a parent, with its retained-parameter mask and an
/// optional freeze set (present for pruned children).
#[derive(Debug, Clone, PartialEq)]
pub struct ChildNetwork {
    pub net: DenseNet,
    pub retained: NetMask,
    pub freeze: Option<FreezeSet>,
    pub lineage: Lineage,
}

/// `W + N o M`: add masked Gaussian noise; unmasked weights are untouched.
pub fn mutate(parent: &DenseNet, mask: &NetMask, noise: &NoiseSpec) -> Result<ChildNetwork> {
    if !mask.matches_net(parent) {
        return Err(Error::shape("mutation mask does not match network"));
    }
    let normal =
        Normal::new(noise.mean, noise.strength).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = rng::stream(noise.seed, &[salt::NOISE]);
    let mut net = parent.clone();
    for (layer, m) in net.layers_mut().iter_mut().zip(mask.layers()) {
        let w = layer.weights_mut().as_mut_slice();
        for (wv, &bit) in w.iter_mut().zip(m.bits()) {
            // One draw per position keeps the noise matrix independent of
            // the mask, matching a full N sampled up front.
            let n = normal.sample(&mut rng);
            if bit == 1 {
                *wv += n;
            }
        }
    }
    Ok(ChildNetwork {
        net,
        retained: NetMask::ones(&parent.weight_shapes()),
        freeze: None,
        lineage: Lineage::new("parent", 0),
    })
}

/// Four children sharing one noise draw and one mask:
/// `W + N o M`, `W + N o (1-M)`, `W - N o M`, `W - N o (1-M)`.
///
/// The noise at each position is snapped to the widest mantissa prefix for
/// which `w + n` and `w - n` mirror around `w` without rounding residue, so
/// the elementwise mean of the four children reproduces the parent exactly.
pub fn mirrored_quad(
    parent: &DenseNet,
    mask: &NetMask,
    noise: &NoiseSpec,
) -> Result<[ChildNetwork; 4]> {
    if !mask.matches_net(parent) {
        return Err(Error::shape("mutation mask does not match network"));
    }
    let normal =
        Normal::new(noise.mean, noise.strength).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = rng::stream(noise.seed, &[salt::NOISE]);

    let shapes = parent.weight_shapes();
    let mut nets = [
        parent.clone(),
        parent.clone(),
        parent.clone(),
        parent.clone(),
    ];
    for (l, m) in mask.layers().iter().enumerate() {
        let (rows, cols) = m.shape();
        for r in 0..rows {
            for c in 0..cols {
                let w = parent.layers()[l].weights().get(r, c);
                let n = snap_mirror(w, normal.sample(&mut rng));
                let (plus_idx, minus_idx) = if m.get(r, c) == 1 { (0, 2) } else { (1, 3) };
                nets[plus_idx].layers_mut()[l].weights_mut().set(r, c, w + n);
                nets[minus_idx].layers_mut()[l].weights_mut().set(r, c, w - n);
            }
        }
    }

    let ones = NetMask::ones(&shapes);
    let mut out = nets.into_iter().enumerate().map(|(i, net)| ChildNetwork {
        net,
        retained: ones.clone(),
        freeze: None,
        lineage: Lineage::new("parent", i),
    });
    Ok([
        out.next().unwrap(),
        out.next().unwrap(),
        out.next().unwrap(),
        out.next().unwrap(),
    ])
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let ap = s - b;
    let bp = s - ap;
    (s, (a - ap) + (b - bp))
}

fn mirrors_exactly(w: f64, n: f64) -> bool {
    let plus = w + n;
    let minus = w - n;
    if !plus.is_finite() || !minus.is_finite() {
        return false;
    }
    let (s, residue) = two_sum(plus, minus);
    s == 2.0 * w && residue == 0.0
}

/// Largest mantissa prefix of `n` whose add/subtract around `w` cancels
/// exactly; falls back to 0. Relative distortion is below 2^-40.
fn snap_mirror(w: f64, n: f64) -> f64 {
    if mirrors_exactly(w, n) {
        return n;
    }
    let bits = n.to_bits();
    for k in 1..=52u64 {
        let candidate = f64::from_bits(bits & !((1u64 << k) - 1));
        if mirrors_exactly(w, candidate) {
            return candidate;
        }
    }
    0.0
}

/// `W o M` with the removed weights frozen at zero for later tuning.
pub fn prune(parent: &DenseNet, mask: &NetMask) -> Result<ChildNetwork> {
    let net = apply_mask(parent, mask)?;
    Ok(ChildNetwork {
        net,
        retained: mask.clone(),
        freeze: Some(FreezeSet::new(mask.clone())),
        lineage: Lineage::new("parent", 0),
    })
}

/// [`prune`] for structured (neuron-level) masks: fully masked rows also
/// zero the matching bias so the unit is removed outright.
pub fn prune_structured(parent: &DenseNet, mask: &NetMask) -> Result<ChildNetwork> {
    let net = apply_mask_structured(parent, mask)?;
    Ok(ChildNetwork {
        net,
        retained: mask.clone(),
        freeze: Some(FreezeSet::new(mask.clone())),
        lineage: Lineage::new("parent", 0),
    })
}

/// Complementary prune pair `(W o M, W o (1-M))` from one mask.
pub fn prune_pair(parent: &DenseNet, mask: &NetMask) -> Result<(ChildNetwork, ChildNetwork)> {
    Ok((prune(parent, mask)?, prune(parent, &anti_mask(mask))?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MagnitudeScope {
    Layerwise,
    Global,
}

/// Mask that removes the `floor(sparsity * n)` smallest-magnitude weights,
/// per layer or globally; ties break by (layer, row, col) ascending.
pub fn magnitude_mask(parent: &DenseNet, sparsity: f64, scope: MagnitudeScope) -> Result<NetMask> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(Error::config(format!("sparsity {sparsity} not in [0,1]")));
    }
    let shapes = parent.weight_shapes();
    let mut mask = NetMask::ones(&shapes);
    match scope {
        MagnitudeScope::Layerwise => {
            for (l, layer) in parent.layers().iter().enumerate() {
                let (rows, cols) = layer.weights().shape();
                let n = rows * cols;
                let drop = (sparsity * n as f64).floor() as usize;
                let mut order: Vec<usize> = (0..n).collect();
                let w = layer.weights().as_slice();
                order.sort_by(|&a, &b| {
                    w[a].abs()
                        .partial_cmp(&w[b].abs())
                        .unwrap()
                        .then(a.cmp(&b))
                });
                for &idx in order.iter().take(drop) {
                    mask.layers_mut()[l].bits_mut()[idx] = 0;
                }
            }
        }
        MagnitudeScope::Global => {
            let mut entries: Vec<(f64, usize, usize)> = Vec::new();
            for (l, layer) in parent.layers().iter().enumerate() {
                for (idx, &w) in layer.weights().as_slice().iter().enumerate() {
                    entries.push((w.abs(), l, idx));
                }
            }
            let drop = (sparsity * entries.len() as f64).floor() as usize;
            entries.sort_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap()
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            for &(_, l, idx) in entries.iter().take(drop) {
                mask.layers_mut()[l].bits_mut()[idx] = 0;
            }
        }
    }
    Ok(mask)
}

/// Tune a child in place, freezing pruned weights when a freeze set is
/// present.
pub fn tune_child(
    child: &mut ChildNetwork,
    data: &Dataset,
    val: Option<&Dataset>,
    state: &mut OptimizerState,
    schedule: &Schedule,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    match child.freeze.clone() {
        Some(mut freeze) => train(
            &mut child.net,
            data,
            val,
            state,
            schedule,
            cfg,
            &mut freeze,
        ),
        None => train(
            &mut child.net,
            data,
            val,
            state,
            schedule,
            cfg,
            &mut crate::train::NoHook,
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PruneSelection {
    /// Extend the pruned set uniformly at random among retained weights.
    Random,
    /// Remove the smallest-magnitude retained weights, recomputed each
    /// pruning epoch.
    Magnitude,
}

/// Per-epoch removal counts that reach `target` after `epochs` epochs, the
/// remainder going to the earliest epochs.
pub fn pruning_increments(target: usize, epochs: usize) -> Vec<usize> {
    let base = target / epochs;
    let extra = target % epochs;
    (0..epochs)
        .map(|e| base + usize::from(e < extra))
        .collect()
}

pub(crate) struct IterativePruneHook {
    increments: Vec<usize>,
    selection: PruneSelection,
    retained: NetMask,
    seed: u64,
}

impl IterativePruneHook {
    fn prune_step(&mut self, epoch: usize, net: &mut DenseNet) {
        let count = self.increments[epoch];
        let mut candidates: Vec<(usize, usize)> = Vec::new();
        for (l, mask) in self.retained.layers().iter().enumerate() {
            for (idx, &bit) in mask.bits().iter().enumerate() {
                if bit == 1 {
                    candidates.push((l, idx));
                }
            }
        }
        let chosen: Vec<(usize, usize)> = match self.selection {
            PruneSelection::Random => {
                let mut rng = rng::stream(self.seed, &[salt::MASK, epoch as u64]);
                rand::seq::index::sample(&mut rng, candidates.len(), count.min(candidates.len()))
                    .into_iter()
                    .map(|i| candidates[i])
                    .collect()
            }
            PruneSelection::Magnitude => {
                let mut scored: Vec<(f64, usize, usize)> = candidates
                    .into_iter()
                    .map(|(l, idx)| (net.layers()[l].weights().as_slice()[idx].abs(), l, idx))
                    .collect();
                scored.sort_by(|a, b| {
                    a.0.partial_cmp(&b.0)
                        .unwrap()
                        .then(a.1.cmp(&b.1))
                        .then(a.2.cmp(&b.2))
                });
                scored
                    .into_iter()
                    .take(count)
                    .map(|(_, l, idx)| (l, idx))
                    .collect()
            }
        };
        for (l, idx) in chosen {
            self.retained.layers_mut()[l].bits_mut()[idx] = 0;
            net.layers_mut()[l].weights_mut().as_mut_slice()[idx] = 0.0;
        }
    }
}

impl TrainHook for IterativePruneHook {
    fn epoch_start(&mut self, epoch: usize, net: &mut DenseNet) {
        if epoch < self.increments.len() {
            self.prune_step(epoch, net);
        }
    }

    fn filter_gradient(&mut self, grad: &mut Gradient) {
        FreezeSet::new(self.retained.clone()).apply_to_gradient(grad);
    }
}

/// Prune in equal per-epoch increments over the first `pruning_epochs`
/// epochs while tuning for `total_epochs`; pruned sets are nested and the
/// final count is exactly `floor(final_sparsity * params)`.
#[allow(clippy::too_many_arguments)]
pub fn iterative_prune_tune(
    parent: &DenseNet,
    final_sparsity: f64,
    pruning_epochs: usize,
    total_epochs: usize,
    selection: PruneSelection,
    data: &Dataset,
    state: &mut OptimizerState,
    schedule: &Schedule,
    batch_size: usize,
    seed: u64,
) -> Result<(ChildNetwork, TrainHistory)> {
    if !(0.0..1.0).contains(&final_sparsity) {
        return Err(Error::config(format!(
            "final sparsity {final_sparsity} not in [0,1)"
        )));
    }
    if pruning_epochs == 0 || pruning_epochs > total_epochs {
        return Err(Error::config(format!(
            "pruning epochs {pruning_epochs} must lie in 1..={total_epochs}"
        )));
    }
    let target = (final_sparsity * parent.param_count() as f64).floor() as usize;
    let mut net = parent.clone();
    let mut hook = IterativePruneHook {
        increments: pruning_increments(target, pruning_epochs),
        selection,
        retained: NetMask::ones(&parent.weight_shapes()),
        seed,
    };
    let cfg = TrainConfig {
        epochs: total_epochs,
        batch_size,
        seed,
    };
    let history = train(&mut net, data, None, state, schedule, &cfg, &mut hook)?;
    let retained = hook.retained;
    Ok((
        ChildNetwork {
            net,
            retained: retained.clone(),
            freeze: Some(FreezeSet::new(retained)),
            lineage: Lineage::new("parent", 0),
        },
        history,
    ))
}
