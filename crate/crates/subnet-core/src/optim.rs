//! SGD, Nesterov-momentum, and Adam parameter updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{DenseNet, Gradient};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Nesterov,
    Adam,
}

/// Optimizer hyperparameters plus per-parameter auxiliary buffers.
///
/// Buffers mirror the shape of the network the state was built for:
/// a velocity per parameter for Nesterov, first/second moments for Adam.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub step_count: usize,
    slot_a: Vec<Slot>,
    slot_b: Vec<Slot>,
}

#[derive(Debug, Clone)]
struct Slot {
    weights: Matrix,
    bias: Vec<f64>,
}

impl Slot {
    fn zeros_like(net: &DenseNet) -> Vec<Slot> {
        net.layers()
            .iter()
            .map(|l| Slot {
                weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                bias: vec![0.0; l.out_dim()],
            })
            .collect()
    }
}

impl OptimizerState {
    pub fn sgd(net: &DenseNet, learning_rate: f64) -> Result<Self> {
        Self::build(net, OptimizerKind::Sgd, learning_rate, 0.0)
    }

    pub fn nesterov(net: &DenseNet, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!("momentum {momentum} not in [0,1)")));
        }
        Self::build(net, OptimizerKind::Nesterov, learning_rate, momentum)
    }

    pub fn adam(net: &DenseNet, learning_rate: f64) -> Result<Self> {
        Self::build(net, OptimizerKind::Adam, learning_rate, 0.0)
    }

    fn build(net: &DenseNet, kind: OptimizerKind, lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::config(format!("learning rate {lr} must be > 0")));
        }
        Ok(Self {
            kind,
            learning_rate: lr,
            momentum,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            step_count: 0,
            slot_a: Slot::zeros_like(net),
            slot_b: Slot::zeros_like(net),
        })
    }
}

/// Apply one update in place. `lr_override` substitutes the stored learning
/// rate for this step (used by schedules).
pub fn optimizer_step(
    state: &mut OptimizerState,
    net: &mut DenseNet,
    grad: &Gradient,
    lr_override: Option<f64>,
) -> Result<()> {
    if grad.layers.len() != net.layers().len() {
        return Err(Error::shape("gradient layer count"));
    }
    if !grad.all_finite() {
        return Err(Error::NonFinite(format!(
            "gradient at step {}",
            state.step_count
        )));
    }
    let lr = lr_override.unwrap_or(state.learning_rate);
    state.step_count += 1;
    let t = state.step_count;

    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        let g = &grad.layers[l];
        if g.weights.shape() != layer.weights().shape() || g.bias.len() != layer.bias().len() {
            return Err(Error::shape(format!("gradient shape at layer {l}")));
        }
        match state.kind {
            OptimizerKind::Sgd => {
                let w = layer.weights_mut().as_mut_slice();
                for (wv, gv) in w.iter_mut().zip(g.weights.as_slice()) {
                    *wv -= lr * gv;
                }
                for (bv, gv) in layer.bias_mut().iter_mut().zip(&g.bias) {
                    *bv -= lr * gv;
                }
            }
            OptimizerKind::Nesterov => {
                // Lookahead form: v <- mu v - lr g; w <- w + mu v - lr g.
                let mu = state.momentum;
                let vel = &mut state.slot_a[l];
                let w = layer.weights_mut().as_mut_slice();
                for ((wv, vv), gv) in w
                    .iter_mut()
                    .zip(vel.weights.as_mut_slice())
                    .zip(g.weights.as_slice())
                {
                    *vv = mu * *vv - lr * gv;
                    *wv += mu * *vv - lr * gv;
                }
                for ((bv, vv), gv) in layer
                    .bias_mut()
                    .iter_mut()
                    .zip(vel.bias.iter_mut())
                    .zip(&g.bias)
                {
                    *vv = mu * *vv - lr * gv;
                    *bv += mu * *vv - lr * gv;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = state.adam_betas;
                let eps = state.adam_eps;
                let bc1 = 1.0 - b1.powi(t as i32);
                let bc2 = 1.0 - b2.powi(t as i32);
                let m = &mut state.slot_a[l];
                let v = &mut state.slot_b[l];
                let w = layer.weights_mut().as_mut_slice();
                for (((wv, mv), vv), gv) in w
                    .iter_mut()
                    .zip(m.weights.as_mut_slice())
                    .zip(v.weights.as_mut_slice())
                    .zip(g.weights.as_slice())
                {
                    *mv = b1 * *mv + (1.0 - b1) * gv;
                    *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                    *wv -= lr * (*mv / bc1) / ((*vv / bc2).sqrt() + eps);
                }
                for (((bv, mv), vv), gv) in layer
                    .bias_mut()
                    .iter_mut()
                    .zip(m.bias.iter_mut())
                    .zip(v.bias.iter_mut())
                    .zip(&g.bias)
                {
                    *mv = b1 * *mv + (1.0 - b1) * gv;
                    *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                    *bv -= lr * (*mv / bc1) / ((*vv / bc2).sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer, Gradient};

    fn toy_net(w: f64) -> DenseNet {
        DenseNet::new(vec![DenseLayer::new(
            Matrix::new(1, 1, vec![w]).unwrap(),
            vec![0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap()
    }

    fn grad_of(net: &DenseNet, g: f64) -> Gradient {
        let mut grad = Gradient::zeros_like(net);
        grad.layers[0].weights.set(0, 0, g);
        grad
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        for make in [
            |n: &DenseNet| OptimizerState::sgd(n, 0.1).unwrap(),
            |n: &DenseNet| OptimizerState::nesterov(n, 0.1, 0.9).unwrap(),
            |n: &DenseNet| OptimizerState::adam(n, 0.1).unwrap(),
        ] {
            let mut net = toy_net(1.25);
            let mut state = make(&net);
            let grad = grad_of(&net, 0.0);
            for _ in 0..5 {
                optimizer_step(&mut state, &mut net, &grad, None).unwrap();
            }
            assert_eq!(net.layers()[0].weights().get(0, 0), 1.25);
            assert_eq!(state.step_count, 5);
        }
    }

    #[test]
    fn sgd_direct_formula() {
        let mut net = toy_net(1.0);
        let mut state = OptimizerState::sgd(&net, 0.1).unwrap();
        let grad = grad_of(&net, 2.0);
        optimizer_step(&mut state, &mut net, &grad, None).unwrap();
        assert!((net.layers()[0].weights().get(0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_steps_match_scalar_trace() {
        // Independent scalar Adam recurrence with constant gradient.
        let (b1, b2, eps, lr, g) = (0.9, 0.999, 1e-8, 0.01, 3.0);
        let mut m = 0.0f64;
        let mut v = 0.0f64;
        let mut w_ref = 1.0f64;
        let mut expected = Vec::new();
        for t in 1..=4 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w_ref -= lr * mh / (vh.sqrt() + eps);
            expected.push(w_ref);
        }

        let mut net = toy_net(1.0);
        let mut state = OptimizerState::adam(&net, lr).unwrap();
        let grad = grad_of(&net, g);
        for want in expected {
            optimizer_step(&mut state, &mut net, &grad, None).unwrap();
            assert!((net.layers()[0].weights().get(0, 0) - want).abs() < 1e-14);
        }
        // Bias-corrected first step has magnitude ~ lr for any constant g.
        let mut net2 = toy_net(0.0);
        let mut st2 = OptimizerState::adam(&net2, lr).unwrap();
        let g2 = grad_of(&net2, 7.0);
        optimizer_step(&mut st2, &mut net2, &g2, None).unwrap();
        let dw = net2.layers()[0].weights().get(0, 0).abs();
        assert!((dw - lr).abs() < 1e-6, "first adam step {dw}");
    }

    #[test]
    fn nesterov_lookahead_form() {
        // v1 = -lr g; w1 = w0 + mu v1 - lr g.
        let (lr, mu, g) = (0.1, 0.9, 2.0);
        let mut net = toy_net(1.0);
        let mut state = OptimizerState::nesterov(&net, lr, mu).unwrap();
        let gr = grad_of(&net, g);
        optimizer_step(&mut state, &mut net, &gr, None).unwrap();
        let v1 = -lr * g;
        let w1 = 1.0 + mu * v1 - lr * g;
        assert!((net.layers()[0].weights().get(0, 0) - w1).abs() < 1e-15);
        optimizer_step(&mut state, &mut net, &gr, None).unwrap();
        let v2 = mu * v1 - lr * g;
        let w2 = w1 + mu * v2 - lr * g;
        assert!((net.layers()[0].weights().get(0, 0) - w2).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut net = toy_net(1.0);
        let mut state = OptimizerState::sgd(&net, 0.1).unwrap();
        let mut grad = Gradient::zeros_like(&net);
        grad.layers[0].weights.as_mut_slice()[0] = f64::NAN;
        assert!(optimizer_step(&mut state, &mut net, &grad, None).is_err());
        // State untouched on rejection.
        assert_eq!(state.step_count, 0);
    }

    #[test]
    fn lr_override_takes_precedence() {
        let mut net = toy_net(1.0);
        let mut state = OptimizerState::sgd(&net, 0.1).unwrap();
        let g = grad_of(&net, 1.0);
        optimizer_step(&mut state, &mut net, &g, Some(0.5)).unwrap();
        assert!((net.layers()[0].weights().get(0, 0) - 0.5).abs() < 1e-15);
    }
}
