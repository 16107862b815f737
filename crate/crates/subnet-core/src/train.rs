//! Mini-batch training loop with per-epoch/per-batch mask hooks.
//!
//! Shuffling draws one permutation per epoch from `(seed, epoch)`, so runs
//! are reproducible regardless of thread count. The final short batch is
//! kept. Hooks drive pruning (gradient freezing) and stochastic masking
//! (transient per-batch weight masks).

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::masking::NetMask;
use crate::matrix::Matrix;
use crate::nn::{self, DenseNet, Gradient};
use crate::optim::{optimizer_step, OptimizerState};
use crate::rng::{self, salt};
use crate::schedules::Schedule;

/// Callbacks threaded through [`train`].
pub trait TrainHook {
    /// Called once per epoch before any batch; may edit the network
    /// (iterative pruning zeroes newly removed weights here).
    fn epoch_start(&mut self, _epoch: usize, _net: &mut DenseNet) {}

    /// Optional weight mask applied only for this batch's forward/backward
    /// pass; original weights are restored before the optimizer step, and
    /// gradients of masked-out weights are zeroed (chain rule through the
    /// masked value).
    fn batch_mask(&mut self, _epoch: usize, _batch: usize) -> Option<NetMask> {
        None
    }

    /// Mutate the gradient before the optimizer step (e.g. freeze pruned
    /// parameters at zero).
    fn filter_gradient(&mut self, _grad: &mut Gradient) {}
}

/// No-op hook.
pub struct NoHook;

impl TrainHook for NoHook {}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

pub type TrainHistory = Vec<EpochStats>;

/// Loss and accuracy of `net` on a dataset.
pub fn evaluate(net: &DenseNet, data: &Dataset) -> Result<(f64, f64)> {
    let probs = net.predict_probs(&data.inputs)?;
    let loss = nn::cross_entropy(&probs, &data.labels)?;
    let mut correct = 0usize;
    for (i, &label) in data.labels.iter().enumerate() {
        correct += usize::from(argmax(probs.row(i)) == label);
    }
    Ok((loss, correct as f64 / data.len() as f64))
}

/// Lowest-index argmax.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Train `net` in place. The schedule is indexed by the optimizer's global
/// step count, so tuning runs that share an `OptimizerState` continue where
/// they left off.
pub fn train(
    net: &mut DenseNet,
    data: &Dataset,
    val: Option<&Dataset>,
    state: &mut OptimizerState,
    schedule: &Schedule,
    cfg: &TrainConfig,
    hook: &mut dyn TrainHook,
) -> Result<TrainHistory> {
    if data.is_empty() {
        return Err(Error::config("training dataset is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size must be > 0"));
    }
    if data.input_dim() != net.input_dim() {
        return Err(Error::shape("dataset width vs network input"));
    }

    let n = data.len();
    let dim = data.input_dim();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        hook.epoch_start(epoch, net);

        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng = rng::stream(cfg.seed, &[salt::SHUFFLE, epoch as u64]);
        for i in (1..n).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut batch_data = Vec::with_capacity(chunk.len() * dim);
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                batch_data.extend_from_slice(data.inputs.row(i));
                labels.push(data.labels[i]);
            }
            let batch = Matrix::new(chunk.len(), dim, batch_data)?;

            let transient = hook.batch_mask(epoch, batch_idx);
            let saved = transient.as_ref().map(|mask| {
                let saved = snapshot_weights(net);
                set_masked_to_zero(net, mask);
                saved
            });

            let (loss, mut grad, batch_correct) = backward_stats(net, &batch, &labels)?;

            if let (Some(mask), Some(saved)) = (transient.as_ref(), saved) {
                restore_weights(net, saved);
                zero_masked_grads(&mut grad, mask);
            }
            hook.filter_gradient(&mut grad);

            let t = state.step_count;
            let lr = schedule.lr_at(t.min(schedule.total_steps))?;
            if schedule.momentum_cycle.is_some() {
                state.momentum = schedule.momentum_at(t.min(schedule.total_steps))?;
            }
            optimizer_step(state, net, &grad, Some(lr))?;

            loss_sum += loss * chunk.len() as f64;
            correct += batch_correct;
        }

        let (val_loss, val_accuracy) = match val {
            Some(v) => {
                let (l, a) = evaluate(net, v)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok(history)
}

fn backward_stats(
    net: &DenseNet,
    batch: &Matrix,
    labels: &[usize],
) -> Result<(f64, Gradient, usize)> {
    let (loss, grad, probs) = nn::backward_with_probs(net, batch, labels)?;
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        correct += usize::from(argmax(probs.row(i)) == label);
    }
    Ok((loss, grad, correct))
}

fn snapshot_weights(net: &DenseNet) -> Vec<Vec<f64>> {
    net.layers()
        .iter()
        .map(|l| l.weights().as_slice().to_vec())
        .collect()
}

fn restore_weights(net: &mut DenseNet, saved: Vec<Vec<f64>>) {
    for (layer, values) in net.layers_mut().iter_mut().zip(saved) {
        layer.weights_mut().as_mut_slice().copy_from_slice(&values);
    }
}

fn set_masked_to_zero(net: &mut DenseNet, mask: &NetMask) {
    crate::masking::mask_weights_in_place(net, mask);
}

fn zero_masked_grads(grad: &mut Gradient, mask: &NetMask) {
    for (layer, m) in grad.layers.iter_mut().zip(mask.layers()) {
        for (g, &bit) in layer.weights.as_mut_slice().iter_mut().zip(m.bits()) {
            if bit == 0 {
                *g = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::spiral;
    use crate::nn::Activation;

    fn spiral_recipe(seed: u64, epochs: usize) -> (DenseNet, TrainHistory) {
        // 3 hidden layers of 64 units, Adam 0.001, batch 64.
        let data = spiral(2500, 0.05, 2.5, seed).unwrap();
        let mut net = DenseNet::init(&[2, 64, 64, 64, 2], Activation::Relu, seed).unwrap();
        let mut state = OptimizerState::adam(&net, 0.001).unwrap();
        let schedule = Schedule::constant(0.001);
        let cfg = TrainConfig {
            epochs,
            batch_size: 64,
            seed,
        };
        let hist = train(
            &mut net,
            &data,
            None,
            &mut state,
            &schedule,
            &cfg,
            &mut NoHook,
        )
        .unwrap();
        (net, hist)
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let data = spiral(100, 0.05, 2.0, 1).unwrap();
        let mut net = DenseNet::init(&[2, 8, 2], Activation::Relu, 1).unwrap();
        let before = net.clone();
        let mut state = OptimizerState::adam(&net, 0.001).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 32,
            seed: 1,
        };
        let hist = train(
            &mut net,
            &data,
            None,
            &mut state,
            &Schedule::constant(0.001),
            &cfg,
            &mut NoHook,
        )
        .unwrap();
        assert!(hist.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn empty_dataset_and_zero_batch_error() {
        let data = spiral(10, 0.05, 2.0, 1).unwrap();
        let mut net = DenseNet::init(&[2, 4, 2], Activation::Relu, 1).unwrap();
        let mut state = OptimizerState::adam(&net, 0.001).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 0,
            seed: 1,
        };
        assert!(train(
            &mut net,
            &data,
            None,
            &mut state,
            &Schedule::constant(0.001),
            &cfg,
            &mut NoHook,
        )
        .is_err());
    }

    #[test]
    fn spiral_recipe_reaches_95_percent_train_accuracy() {
        let (net, hist) = spiral_recipe(0, 10);
        let data = spiral(2500, 0.05, 2.5, 0).unwrap();
        let (_, acc) = evaluate(&net, &data).unwrap();
        assert!(acc > 0.95, "train accuracy {acc}");
        assert_eq!(hist.len(), 10);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (a, _) = spiral_recipe(7, 3);
        let (b, _) = spiral_recipe(7, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn loss_decreases_for_most_seeds() {
        // Not monotonic per-epoch, but the recipe should end below its
        // starting loss in at least 9 of 10 seeds.
        let mut wins = 0;
        for seed in 0..10 {
            let data = spiral(500, 0.05, 2.5, seed).unwrap();
            let mut net = DenseNet::init(&[2, 16, 16, 2], Activation::Relu, seed).unwrap();
            let (loss_before, _) = evaluate(&net, &data).unwrap();
            let mut state = OptimizerState::adam(&net, 0.001).unwrap();
            let cfg = TrainConfig {
                epochs: 5,
                batch_size: 64,
                seed,
            };
            train(
                &mut net,
                &data,
                None,
                &mut state,
                &Schedule::constant(0.001),
                &cfg,
                &mut NoHook,
            )
            .unwrap();
            let (loss_after, _) = evaluate(&net, &data).unwrap();
            wins += usize::from(loss_after < loss_before);
        }
        assert!(wins >= 9, "loss dropped in only {wins}/10 runs");
    }

    #[test]
    fn validation_metrics_are_recorded() {
        let data = spiral(200, 0.05, 2.0, 3).unwrap();
        let val = spiral(50, 0.05, 2.0, 4).unwrap();
        let mut net = DenseNet::init(&[2, 8, 2], Activation::Relu, 3).unwrap();
        let mut state = OptimizerState::adam(&net, 0.001).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 50,
            seed: 3,
        };
        let hist = train(
            &mut net,
            &data,
            Some(&val),
            &mut state,
            &Schedule::constant(0.001),
            &cfg,
            &mut NoHook,
        )
        .unwrap();
        assert!(hist.iter().all(|e| e.val_loss.is_some() && e.val_accuracy.is_some()));
    }

    #[test]
    fn hooks_fire_per_epoch_and_per_batch() {
        struct Counter {
            epochs: usize,
            batches: usize,
        }
        impl TrainHook for Counter {
            fn epoch_start(&mut self, _epoch: usize, _net: &mut DenseNet) {
                self.epochs += 1;
            }
            fn batch_mask(&mut self, _e: usize, _b: usize) -> Option<NetMask> {
                self.batches += 1;
                None
            }
        }
        let data = spiral(100, 0.05, 2.0, 1).unwrap();
        let mut net = DenseNet::init(&[2, 4, 2], Activation::Relu, 1).unwrap();
        let mut state = OptimizerState::adam(&net, 0.001).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 30,
            seed: 1,
        };
        let mut hook = Counter {
            epochs: 0,
            batches: 0,
        };
        train(
            &mut net,
            &data,
            None,
            &mut state,
            &Schedule::constant(0.001),
            &cfg,
            &mut hook,
        )
        .unwrap();
        assert_eq!(hook.epochs, 3);
        // 100 samples, batch 30 -> 4 batches per epoch (short final batch kept).
        assert_eq!(hook.batches, 12);
    }
}
