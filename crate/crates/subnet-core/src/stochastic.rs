//! Stochastic subnetwork masks: probability matrices over parameters,
//! annealing schedules that harden them into a deterministic target
//! subnetwork, and the per-batch Bernoulli tuning loop.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::masking::{anti_mask, Mask, NetMask};
use crate::matrix::Matrix;
use crate::nn::DenseNet;
use crate::optim::OptimizerState;
use crate::perturb::{ChildNetwork, FreezeSet, Lineage};
use crate::rng::{self, salt};
use crate::schedules::Schedule;
use crate::train::{train, TrainConfig, TrainHistory, TrainHook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnealKind {
    Linear,
    Cosine,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitKind {
    RandomUniform,
    Temperature,
    GaussianMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemperatureVariant {
    /// Target weights always on (P=1); off-target weights get probability
    /// tau to pop back in.
    ReverseDropout,
    /// Target weights decayed to 1-tau, off-target raised to tau.
    Symmetric,
}

/// Per-parameter retention probabilities with an annealing plan toward a
/// deterministic target mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbMask {
    layers: Vec<Matrix>,
    target: NetMask,
    pub init_kind: InitKind,
    pub tau_init: f64,
    pub anneal: AnnealKind,
    pub anneal_epochs: usize,
    /// Decay constant of the exponential schedule.
    pub exp_k: f64,
}

pub const DEFAULT_EXP_K: f64 = 5.0;

impl ProbMask {
    /// `P ~ U(0,1)`; bits anneal to 1 where `P > sparsity`, else to 0.
    /// Initial mean activation is ~0.5 regardless of the target sparsity.
    pub fn init_random(
        target_sparsity: f64,
        shapes: &[(usize, usize)],
        seed: u64,
    ) -> Result<Self> {
        if !(target_sparsity > 0.0 && target_sparsity < 1.0) {
            return Err(Error::config(format!(
                "target sparsity {target_sparsity} not in (0,1)"
            )));
        }
        let mut rng = rng::stream(seed, &[salt::PROB_INIT]);
        let mut layers = Vec::with_capacity(shapes.len());
        let mut bits = Vec::with_capacity(shapes.len());
        for &(r, c) in shapes {
            let mut p = Matrix::zeros(r, c);
            let mut b = Mask::zeros(r, c);
            for i in 0..r {
                for j in 0..c {
                    let v: f64 = rng.gen();
                    p.set(i, j, v);
                    b.set(i, j, u8::from(v > target_sparsity));
                }
            }
            layers.push(p);
            bits.push(b);
        }
        Ok(Self {
            layers,
            target: NetMask::new(bits),
            init_kind: InitKind::RandomUniform,
            tau_init: f64::NAN,
            anneal: AnnealKind::Linear,
            anneal_epochs: 0,
            exp_k: DEFAULT_EXP_K,
        })
    }

    /// Temperature scaling of a binary target mask.
    pub fn init_temperature(
        target: &NetMask,
        tau: f64,
        variant: TemperatureVariant,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::config(format!("tau {tau} not in [0,1]")));
        }
        let layers = target
            .layers()
            .iter()
            .map(|m| {
                let (r, c) = m.shape();
                let mut p = Matrix::zeros(r, c);
                for i in 0..r {
                    for j in 0..c {
                        let v = if m.get(i, j) == 1 {
                            match variant {
                                TemperatureVariant::ReverseDropout => 1.0,
                                TemperatureVariant::Symmetric => 1.0 - tau,
                            }
                        } else {
                            tau
                        };
                        p.set(i, j, v);
                    }
                }
                p
            })
            .collect();
        Ok(Self {
            layers,
            target: target.clone(),
            init_kind: InitKind::Temperature,
            tau_init: tau,
            anneal: AnnealKind::Cosine,
            anneal_epochs: 0,
            exp_k: DEFAULT_EXP_K,
        })
    }

    /// Two-population Gaussian probabilities indexed by a binary matrix:
    /// `N(mu1, sd1^2)` where the index bit is 0, `N(mu2, sd2^2)` where it is
    /// 1, clamped to [0,1]. The index is the annealing target (bit 1 means
    /// retained).
    pub fn init_gaussian_mixture(
        index: &NetMask,
        mu1: f64,
        sd1: f64,
        mu2: f64,
        sd2: f64,
        seed: u64,
    ) -> Result<Self> {
        for v in [mu1, sd1, mu2, sd2] {
            if !v.is_finite() {
                return Err(Error::NonFinite("gaussian mixture parameter".into()));
            }
        }
        let n1 = Normal::new(mu1, sd1.max(0.0)).map_err(|e| Error::config(e.to_string()))?;
        let n2 = Normal::new(mu2, sd2.max(0.0)).map_err(|e| Error::config(e.to_string()))?;
        let mut rng = rng::stream(seed, &[salt::PROB_INIT]);
        let layers = index
            .layers()
            .iter()
            .map(|m| {
                let (r, c) = m.shape();
                let mut p = Matrix::zeros(r, c);
                for i in 0..r {
                    for j in 0..c {
                        let v = if m.get(i, j) == 1 {
                            n2.sample(&mut rng)
                        } else {
                            n1.sample(&mut rng)
                        };
                        p.set(i, j, v.clamp(0.0, 1.0));
                    }
                }
                p
            })
            .collect();
        Ok(Self {
            layers,
            target: index.clone(),
            init_kind: InitKind::GaussianMixture,
            tau_init: f64::NAN,
            anneal: AnnealKind::Cosine,
            anneal_epochs: 0,
            exp_k: DEFAULT_EXP_K,
        })
    }

    pub fn with_anneal(mut self, kind: AnnealKind, epochs: usize) -> Self {
        self.anneal = kind;
        self.anneal_epochs = epochs;
        self
    }

    pub fn with_exp_k(mut self, k: f64) -> Self {
        self.exp_k = k;
        self
    }

    pub fn initial(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn target(&self) -> &NetMask {
        &self.target
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.target.shapes()
    }

    /// Eq-style opposed pair: probabilities flipped to `1 - P`, target
    /// complemented.
    pub fn opposed(&self) -> ProbMask {
        ProbMask {
            layers: self.layers.iter().map(|m| m.map(|v| 1.0 - v)).collect(),
            target: anti_mask(&self.target),
            ..self.clone()
        }
    }

    /// Probabilities in effect at `epoch`: each entry decays from its
    /// initial value toward its target bit and lands exactly on the bit at
    /// `anneal_epochs` (the exponential schedule included, by a final snap).
    pub fn anneal_at(&self, epoch: usize) -> Vec<Matrix> {
        let total = self.anneal_epochs;
        if total == 0 || epoch >= total {
            return self
                .target
                .layers()
                .iter()
                .map(|m| {
                    let (r, c) = m.shape();
                    let mut p = Matrix::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            p.set(i, j, f64::from(m.get(i, j)));
                        }
                    }
                    p
                })
                .collect();
        }
        if epoch == 0 {
            return self.layers.clone();
        }
        let frac = epoch as f64 / total as f64;
        let decay = match self.anneal {
            AnnealKind::Linear => 1.0 - frac,
            AnnealKind::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()),
            AnnealKind::Exponential => (-self.exp_k * frac).exp(),
        };
        self.layers
            .iter()
            .zip(self.target.layers())
            .map(|(p0, m)| {
                let (r, c) = p0.shape();
                let mut p = Matrix::zeros(r, c);
                for i in 0..r {
                    for j in 0..c {
                        let b = f64::from(m.get(i, j));
                        p.set(i, j, b + (p0.get(i, j) - b) * decay);
                    }
                }
                p
            })
            .collect()
    }
}

/// Independent Bernoulli draw per entry; a fresh seed gives a fresh mask.
pub fn realize(probs: &[Matrix], seed: u64) -> NetMask {
    let mut rng = rng::stream(seed, &[salt::REALIZE]);
    let layers = probs
        .iter()
        .map(|p| {
            let (r, c) = p.shape();
            let mut m = Mask::zeros(r, c);
            for i in 0..r {
                for j in 0..c {
                    m.set(i, j, u8::from(rng.gen::<f64>() < p.get(i, j)));
                }
            }
            m
        })
        .collect();
    NetMask::new(layers)
}

struct AnnealHook<'a> {
    pm: &'a ProbMask,
    seed: u64,
    current: Vec<Matrix>,
}

impl TrainHook for AnnealHook<'_> {
    fn epoch_start(&mut self, epoch: usize, _net: &mut DenseNet) {
        self.current = self.pm.anneal_at(epoch);
    }

    fn batch_mask(&mut self, epoch: usize, batch: usize) -> Option<NetMask> {
        Some(realize(
            &self.current,
            rng::derive(self.seed, &[salt::REALIZE, epoch as u64, batch as u64]),
        ))
    }
}

/// Tune a parent copy under an annealing probability mask (one probability
/// update per epoch, one Bernoulli mask per batch applied transiently),
/// then harden to the target subnetwork with frozen zeros.
pub fn anneal_tune(
    parent: &DenseNet,
    pm: &ProbMask,
    data: &Dataset,
    val: Option<&Dataset>,
    state: &mut OptimizerState,
    schedule: &Schedule,
    cfg: &TrainConfig,
) -> Result<(ChildNetwork, TrainHistory)> {
    if pm.shapes() != parent.weight_shapes() {
        return Err(Error::shape("probability mask does not match network"));
    }
    if pm.anneal_epochs > cfg.epochs {
        return Err(Error::config(format!(
            "anneal_epochs {} exceeds tuning epochs {}",
            pm.anneal_epochs, cfg.epochs
        )));
    }
    let mut net = parent.clone();
    let mut hook = AnnealHook {
        pm,
        seed: cfg.seed,
        current: Vec::new(),
    };
    let history = train(&mut net, data, val, state, schedule, cfg, &mut hook)?;

    crate::masking::mask_weights_in_place(&mut net, pm.target());
    let child = ChildNetwork {
        net,
        retained: pm.target().clone(),
        freeze: Some(FreezeSet::new(pm.target().clone())),
        lineage: Lineage::new("parent", 0),
    };
    Ok((child, history))
}
