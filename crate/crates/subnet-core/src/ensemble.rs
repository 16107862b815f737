//! Ensemble orchestration: prediction combination, candidate selection,
//! trust-region hyperparameter search, and the three end-to-end pipelines
//! (noisy, sparse, stochastic).

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::masking::{sample_mask, Granularity, NetMask, SamplerSpec, Scope};
use crate::matrix::Matrix;
use crate::metrics::{self, PredictionSet};
use crate::nn::DenseNet;
use crate::optim::{OptimizerKind, OptimizerState};
use crate::perturb::{
    mirrored_quad, mutate, prune, prune_structured, tune_child, ChildNetwork, Lineage, NoiseSpec,
};
use crate::rng::{self, salt};
use crate::schedules::Schedule;
use crate::stochastic::{anneal_tune, AnnealKind, ProbMask, TemperatureVariant};
use crate::train::{argmax, TrainConfig};

pub const DEFAULT_ECE_BINS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Combination {
    Mean,
    Vote,
}

/// Elementwise mean of softmax-normalized member outputs.
pub fn combine_mean(member_probs: &[&Matrix]) -> Result<Matrix> {
    let first = member_probs
        .first()
        .ok_or_else(|| Error::config("no members to combine"))?;
    let (rows, cols) = first.shape();
    for m in member_probs {
        if m.shape() != (rows, cols) {
            return Err(Error::shape("member output shapes differ"));
        }
    }
    let k = member_probs.len() as f64;
    let mut out = Matrix::zeros(rows, cols);
    for m in member_probs {
        for (o, v) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *o += v;
        }
    }
    for o in out.as_mut_slice() {
        *o /= k;
    }
    Ok(out)
}

/// Per-sample mode of member argmax votes; ties break to the lowest class
/// index.
pub fn combine_vote(member_probs: &[&Matrix]) -> Result<Vec<usize>> {
    let first = member_probs
        .first()
        .ok_or_else(|| Error::config("no members to combine"))?;
    let (rows, cols) = first.shape();
    for m in member_probs {
        if m.shape() != (rows, cols) {
            return Err(Error::shape("member output shapes differ"));
        }
    }
    let mut labels = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut counts = vec![0usize; cols];
        for m in member_probs {
            counts[argmax(m.row(i))] += 1;
        }
        let mut best = 0;
        for (c, &n) in counts.iter().enumerate().skip(1) {
            if n > counts[best] {
                best = c;
            }
        }
        labels.push(best);
    }
    Ok(labels)
}

/// Indices of the `k` highest-fitness candidates, ties resolved by earlier
/// index.
pub fn select_top_k(fitness: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > fitness.len() {
        return Err(Error::config(format!(
            "cannot select {k} of {} candidates",
            fitness.len()
        )));
    }
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| {
        fitness[b]
            .partial_cmp(&fitness[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMetrics {
    pub accuracy: f64,
    pub nll: f64,
    pub ece: f64,
}

/// Accuracy/NLL/ECE of a probability matrix against labels.
pub fn score_probs(probs: &Matrix, labels: &[usize], ece_bins: usize) -> Result<EnsembleMetrics> {
    let ps = PredictionSet::new(probs.clone(), labels.to_vec())?;
    Ok(EnsembleMetrics {
        accuracy: metrics::accuracy(&ps),
        nll: metrics::nll(&ps),
        ece: metrics::ece(&ps, ece_bins)?,
    })
}

/// A finished ensemble plus its parent.
#[derive(Debug, Clone)]
pub struct EnsembleRecord {
    pub members: Vec<ChildNetwork>,
    pub parent: DenseNet,
    pub combination: Combination,
    pub include_parent: bool,
}

impl EnsembleRecord {
    /// Combined ensemble probabilities and metrics on a dataset. Vote
    /// ensembles score accuracy by vote; NLL/ECE always come from the mean
    /// distribution.
    pub fn score(&self, data: &Dataset, ece_bins: usize) -> Result<EnsembleMetrics> {
        let mut probs: Vec<Matrix> = Vec::with_capacity(self.members.len() + 1);
        if self.include_parent {
            probs.push(self.parent.predict_probs(&data.inputs)?);
        }
        for m in &self.members {
            probs.push(m.net.predict_probs(&data.inputs)?);
        }
        let refs: Vec<&Matrix> = probs.iter().collect();
        let mean = combine_mean(&refs)?;
        let mut out = score_probs(&mean, &data.labels, ece_bins)?;
        if self.combination == Combination::Vote {
            let votes = combine_vote(&refs)?;
            let correct = votes
                .iter()
                .zip(&data.labels)
                .filter(|(v, l)| v == l)
                .count();
            out.accuracy = correct as f64 / data.len() as f64;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionSpec {
    /// Ascending mutation strengths to probe.
    pub sigma_grid: Vec<f64>,
    /// Ascending sparsities to probe.
    pub sparsity_grid: Vec<f64>,
    /// Trust-region boundary: largest acceptable mean KL divergence.
    pub kl_target: f64,
    pub samples_per_cell: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionResult {
    pub sigma: f64,
    pub sparsity: f64,
    pub mean_kl: f64,
    pub mean_child_accuracy: f64,
    /// False when no cell met the KL target and the closest cell was
    /// returned instead.
    pub within_target: bool,
}

/// Grid-search mutation hyperparameters on a probe set: among cells whose
/// mean parent-child KL stays within the target, pick the one with the best
/// mean child accuracy.
pub fn trust_region_search(
    parent: &DenseNet,
    spec: &TrustRegionSpec,
    probe: &Dataset,
) -> Result<TrustRegionResult> {
    if spec.sigma_grid.is_empty() || spec.sparsity_grid.is_empty() {
        return Err(Error::config("trust-region grids must be non-empty"));
    }
    if !(spec.kl_target > 0.0) {
        return Err(Error::config("kl_target must be positive"));
    }
    if spec.samples_per_cell == 0 {
        return Err(Error::config("samples_per_cell must be > 0"));
    }
    if probe.is_empty() {
        return Err(Error::config("probe set is empty"));
    }
    let parent_probs = parent.predict_probs(&probe.inputs)?;
    let shapes = parent.weight_shapes();

    let mut evaluated: Vec<TrustRegionResult> = Vec::new();
    for (si, &sigma) in spec.sigma_grid.iter().enumerate() {
        for (pi, &sparsity) in spec.sparsity_grid.iter().enumerate() {
            let mut kl_sum = 0.0;
            let mut acc_sum = 0.0;
            for sample in 0..spec.samples_per_cell {
                let cell = (si * spec.sparsity_grid.len() + pi) as u64;
                let mask_seed = rng::derive(spec.seed, &[salt::CHILD, cell, sample as u64, 0]);
                let noise_seed = rng::derive(spec.seed, &[salt::CHILD, cell, sample as u64, 1]);
                let mask = sample_mask(&SamplerSpec::unstructured(sparsity, mask_seed), &shapes)?;
                let child = mutate(parent, &mask, &NoiseSpec::centered(sigma, noise_seed)?)?;
                let child_probs = child.net.predict_probs(&probe.inputs)?;
                kl_sum += metrics::mean_kl(&parent_probs, &child_probs)?;
                let ps = PredictionSet::new(child_probs, probe.labels.clone())?;
                acc_sum += metrics::accuracy(&ps);
            }
            evaluated.push(TrustRegionResult {
                sigma,
                sparsity,
                mean_kl: kl_sum / spec.samples_per_cell as f64,
                mean_child_accuracy: acc_sum / spec.samples_per_cell as f64,
                within_target: true,
            });
        }
    }

    let admissible = evaluated
        .iter()
        .filter(|r| r.mean_kl <= spec.kl_target)
        .max_by(|a, b| {
            a.mean_child_accuracy
                .partial_cmp(&b.mean_child_accuracy)
                .unwrap()
        });
    if let Some(best) = admissible {
        return Ok(*best);
    }
    let mut fallback = *evaluated
        .iter()
        .min_by(|a, b| a.mean_kl.partial_cmp(&b.mean_kl).unwrap())
        .unwrap();
    fallback.within_target = false;
    Ok(fallback)
}

/// Optimizer + schedule + budget for tuning child networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSpec {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
}

impl TuneSpec {
    pub fn adam_constant(lr: f64, epochs: usize, batch_size: usize) -> Self {
        TuneSpec {
            optimizer: OptimizerKind::Adam,
            learning_rate: lr,
            momentum: 0.0,
            schedule: Schedule::constant(lr),
            epochs,
            batch_size,
        }
    }

    pub fn build_state(&self, net: &DenseNet) -> Result<OptimizerState> {
        match self.optimizer {
            OptimizerKind::Sgd => OptimizerState::sgd(net, self.learning_rate),
            OptimizerKind::Nesterov => {
                OptimizerState::nesterov(net, self.learning_rate, self.momentum)
            }
            OptimizerKind::Adam => OptimizerState::adam(net, self.learning_rate),
        }
    }
}

/// Steps taken by `epochs` passes over `n` samples at a batch size (final
/// short batch included) — for sizing per-step schedules.
pub fn steps_for(n: usize, batch_size: usize, epochs: usize) -> usize {
    n.div_ceil(batch_size) * epochs
}

#[derive(Debug, Clone, Copy)]
pub struct RunData<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub test: &'a Dataset,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub ensemble: EnsembleRecord,
    pub parent_metrics: EnsembleMetrics,
    pub ensemble_metrics: EnsembleMetrics,
    /// Validation fitness of each selected member, ensemble order.
    pub member_fitness: Vec<f64>,
    /// Test accuracy of each selected member, ensemble order.
    pub member_test_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyConfig {
    pub population: usize,
    pub ensemble_size: usize,
    pub sparsity: f64,
    pub noise_mean: f64,
    pub noise_strength: f64,
    /// Generate the population in mirrored/partitioned quads sharing noise
    /// and mask per quad; requires `population % 4 == 0`.
    pub mirrored: bool,
    pub combination: Combination,
    pub include_parent: bool,
    pub ece_bins: usize,
    pub seed: u64,
}

impl NoisyConfig {
    pub fn basic(population: usize, ensemble_size: usize, sparsity: f64, sigma: f64, seed: u64) -> Self {
        NoisyConfig {
            population,
            ensemble_size,
            sparsity,
            noise_mean: 0.0,
            noise_strength: sigma,
            mirrored: false,
            combination: Combination::Mean,
            include_parent: true,
            ece_bins: DEFAULT_ECE_BINS,
            seed,
        }
    }
}

fn child_mask_seed(seed: u64, unit: usize) -> u64 {
    rng::derive(seed, &[salt::CHILD, unit as u64, 0])
}

fn child_noise_seed(seed: u64, unit: usize) -> u64 {
    rng::derive(seed, &[salt::CHILD, unit as u64, 1])
}

fn child_tune_seed(seed: u64, child: usize) -> u64 {
    rng::derive(seed, &[salt::CHILD, child as u64, 2])
}

/// Population generation, validation-fitness selection, test scoring — no
/// child tuning.
pub fn run_noisy(parent: &DenseNet, data: RunData<'_>, cfg: &NoisyConfig) -> Result<RunOutcome> {
    if cfg.ensemble_size == 0 || cfg.population < cfg.ensemble_size {
        return Err(Error::config(format!(
            "population {} vs ensemble size {}",
            cfg.population, cfg.ensemble_size
        )));
    }
    if cfg.mirrored && cfg.population % 4 != 0 {
        return Err(Error::config("mirrored generation needs population % 4 == 0"));
    }
    let shapes = parent.weight_shapes();

    let mut candidates: Vec<ChildNetwork> = Vec::with_capacity(cfg.population);
    if cfg.mirrored {
        for quad in 0..cfg.population / 4 {
            let mask = sample_mask(
                &SamplerSpec::unstructured(cfg.sparsity, child_mask_seed(cfg.seed, quad)),
                &shapes,
            )?;
            let noise =
                NoiseSpec::new(cfg.noise_mean, cfg.noise_strength, child_noise_seed(cfg.seed, quad))?;
            let four = mirrored_quad(parent, &mask, &noise)?;
            for (j, mut child) in four.into_iter().enumerate() {
                child.lineage = Lineage::new("parent", quad * 4 + j);
                candidates.push(child);
            }
        }
    } else {
        for i in 0..cfg.population {
            let mask = sample_mask(
                &SamplerSpec::unstructured(cfg.sparsity, child_mask_seed(cfg.seed, i)),
                &shapes,
            )?;
            let noise =
                NoiseSpec::new(cfg.noise_mean, cfg.noise_strength, child_noise_seed(cfg.seed, i))?;
            let mut child = mutate(parent, &mask, &noise)?;
            child.lineage = Lineage::new("parent", i);
            candidates.push(child);
        }
    }

    finish_run(
        parent,
        candidates,
        data,
        cfg.ensemble_size,
        cfg.combination,
        cfg.include_parent,
        cfg.ece_bins,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseConfig {
    pub members: usize,
    pub sparsity: f64,
    /// Neural partitioning: members come in complementary pairs; requires
    /// an even member count and 0.5 sparsity to make pair sizes match.
    pub partitioned: bool,
    pub granularity: Granularity,
    pub tune: TuneSpec,
    pub combination: Combination,
    pub include_parent: bool,
    pub ece_bins: usize,
    pub seed: u64,
}

impl SparseConfig {
    pub fn basic(members: usize, sparsity: f64, tune: TuneSpec, seed: u64) -> Self {
        SparseConfig {
            members,
            sparsity,
            partitioned: false,
            granularity: Granularity::Unstructured,
            tune,
            combination: Combination::Mean,
            include_parent: false,
            ece_bins: DEFAULT_ECE_BINS,
            seed,
        }
    }
}

/// Child subnetwork masks shared by the sparse and stochastic pipelines, so
/// the two coincide under shared seeds.
fn sparse_child_masks(
    shapes: &[(usize, usize)],
    members: usize,
    sparsity: f64,
    granularity: Granularity,
    partitioned: bool,
    seed: u64,
) -> Result<Vec<NetMask>> {
    let mut masks = Vec::with_capacity(members);
    if partitioned {
        if members % 2 != 0 {
            return Err(Error::config("partitioned ensembles need an even member count"));
        }
        for pair in 0..members / 2 {
            let spec = SamplerSpec {
                sparsity,
                granularity,
                scope: Scope::Layerwise,
                seed: child_mask_seed(seed, pair),
            };
            let mask = sample_mask(&spec, shapes)?;
            masks.push(mask.clone());
            masks.push(crate::masking::anti_mask(&mask));
        }
    } else {
        for i in 0..members {
            let spec = SamplerSpec {
                sparsity,
                granularity,
                scope: Scope::Layerwise,
                seed: child_mask_seed(seed, i),
            };
            masks.push(sample_mask(&spec, shapes)?);
        }
    }
    Ok(masks)
}

/// Prune-and-tune pipeline: every child joins the ensemble.
pub fn run_sparse(parent: &DenseNet, data: RunData<'_>, cfg: &SparseConfig) -> Result<RunOutcome> {
    if cfg.members == 0 {
        return Err(Error::config("ensemble needs at least one member"));
    }
    let masks = sparse_child_masks(
        &parent.weight_shapes(),
        cfg.members,
        cfg.sparsity,
        cfg.granularity,
        cfg.partitioned,
        cfg.seed,
    )?;

    let mut members = Vec::with_capacity(cfg.members);
    for (i, mask) in masks.iter().enumerate() {
        let mut child = match cfg.granularity {
            Granularity::Unstructured => prune(parent, mask)?,
            Granularity::Structured => prune_structured(parent, mask)?,
        };
        child.lineage = Lineage::new("parent", i);
        let mut state = cfg.tune.build_state(&child.net)?;
        let tc = TrainConfig {
            epochs: cfg.tune.epochs,
            batch_size: cfg.tune.batch_size,
            seed: child_tune_seed(cfg.seed, i),
        };
        tune_child(&mut child, data.train, None, &mut state, &cfg.tune.schedule, &tc)?;
        members.push(child);
    }

    finish_run(
        parent,
        members,
        data,
        cfg.members,
        cfg.combination,
        cfg.include_parent,
        cfg.ece_bins,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StochasticInit {
    /// Temperature-scale a sampled binary target mask.
    Temperature { tau: f64, variant: TemperatureVariant },
    /// Uniform-random probabilities; the target derives from the sparsity
    /// threshold.
    RandomUniform,
    /// Gaussian populations around a sampled index mask.
    GaussianMixture { mu1: f64, sd1: f64, mu2: f64, sd2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticConfig {
    pub members: usize,
    pub sparsity: f64,
    pub partitioned: bool,
    pub init: StochasticInit,
    pub anneal: AnnealKind,
    pub anneal_epochs: usize,
    pub tune: TuneSpec,
    pub combination: Combination,
    pub include_parent: bool,
    pub ece_bins: usize,
    pub seed: u64,
}

/// Stochastic-annealing pipeline: children tune under per-batch Bernoulli
/// masks that harden into their target subnetworks.
pub fn run_stochastic(
    parent: &DenseNet,
    data: RunData<'_>,
    cfg: &StochasticConfig,
) -> Result<RunOutcome> {
    if cfg.members == 0 {
        return Err(Error::config("ensemble needs at least one member"));
    }
    if cfg.anneal_epochs > cfg.tune.epochs {
        return Err(Error::config(format!(
            "anneal_epochs {} exceeds tune epochs {}",
            cfg.anneal_epochs, cfg.tune.epochs
        )));
    }
    let shapes = parent.weight_shapes();

    let mut members = Vec::with_capacity(cfg.members);
    for i in 0..cfg.members {
        let pm = match &cfg.init {
            StochasticInit::Temperature { tau, variant } => {
                // Same mask stream as the sparse pipeline.
                let masks = sparse_child_masks(
                    &shapes,
                    cfg.members,
                    cfg.sparsity,
                    Granularity::Unstructured,
                    cfg.partitioned,
                    cfg.seed,
                )?;
                ProbMask::init_temperature(&masks[i], *tau, *variant)?
                    .with_anneal(cfg.anneal, cfg.anneal_epochs)
            }
            StochasticInit::RandomUniform => {
                ProbMask::init_random(cfg.sparsity, &shapes, child_mask_seed(cfg.seed, i))?
                    .with_anneal(cfg.anneal, cfg.anneal_epochs)
            }
            StochasticInit::GaussianMixture { mu1, sd1, mu2, sd2 } => {
                let index = sample_mask(
                    &SamplerSpec::unstructured(cfg.sparsity, child_mask_seed(cfg.seed, i)),
                    &shapes,
                )?;
                ProbMask::init_gaussian_mixture(
                    &index,
                    *mu1,
                    *sd1,
                    *mu2,
                    *sd2,
                    child_noise_seed(cfg.seed, i),
                )?
                .with_anneal(cfg.anneal, cfg.anneal_epochs)
            }
        };
        let mut state = cfg.tune.build_state(parent)?;
        let tc = TrainConfig {
            epochs: cfg.tune.epochs,
            batch_size: cfg.tune.batch_size,
            seed: child_tune_seed(cfg.seed, i),
        };
        let (mut child, _) = anneal_tune(
            parent,
            &pm,
            data.train,
            None,
            &mut state,
            &cfg.tune.schedule,
            &tc,
        )?;
        child.lineage = Lineage::new("parent", i);
        members.push(child);
    }

    finish_run(
        parent,
        members,
        data,
        cfg.members,
        cfg.combination,
        cfg.include_parent,
        cfg.ece_bins,
    )
}

fn finish_run(
    parent: &DenseNet,
    candidates: Vec<ChildNetwork>,
    data: RunData<'_>,
    k: usize,
    combination: Combination,
    include_parent: bool,
    ece_bins: usize,
) -> Result<RunOutcome> {
    let mut fitness = Vec::with_capacity(candidates.len());
    for child in &candidates {
        let probs = child.net.predict_probs(&data.val.inputs)?;
        let ps = PredictionSet::new(probs, data.val.labels.clone())?;
        fitness.push(metrics::accuracy(&ps));
    }
    let selected = select_top_k(&fitness, k)?;

    let mut members = Vec::with_capacity(k);
    let mut member_fitness = Vec::with_capacity(k);
    let mut member_test_accuracy = Vec::with_capacity(k);
    let mut by_index: Vec<Option<ChildNetwork>> = candidates.into_iter().map(Some).collect();
    for &idx in &selected {
        let child = by_index[idx].take().expect("unique selection indices");
        let probs = child.net.predict_probs(&data.test.inputs)?;
        let ps = PredictionSet::new(probs, data.test.labels.clone())?;
        member_test_accuracy.push(metrics::accuracy(&ps));
        member_fitness.push(fitness[idx]);
        members.push(child);
    }

    let ensemble = EnsembleRecord {
        members,
        parent: parent.clone(),
        combination,
        include_parent,
    };
    let parent_probs = parent.predict_probs(&data.test.inputs)?;
    let parent_metrics = score_probs(&parent_probs, &data.test.labels, ece_bins)?;
    let ensemble_metrics = ensemble.score(data.test, ece_bins)?;
    Ok(RunOutcome {
        ensemble,
        parent_metrics,
        ensemble_metrics,
        member_fitness,
        member_test_accuracy,
    })
}
