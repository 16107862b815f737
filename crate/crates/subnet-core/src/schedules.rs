//! Learning-rate and momentum schedules, indexed per training step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Constant,
    /// Multiply the rate by `factor` once `step` is reached.
    StepDecay { breakpoints: Vec<Breakpoint> },
    /// Cosine warm-up to `eta_max` over `warm_fraction` of the run, cosine
    /// cool-down to `eta_min` over the remainder. No annihilation phase.
    OneCycle { warm_fraction: f64 },
    /// Cosine decay from `eta_init` to `eta_min` over the whole run.
    Cosine,
    /// Hold `eta_init` until `hold_fraction`, interpolate linearly to
    /// `eta_min` at `decay_end_fraction`, then hold `eta_min`.
    Linear {
        hold_fraction: f64,
        decay_end_fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub step: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub eta_init: f64,
    pub eta_max: f64,
    pub eta_min: f64,
    pub total_steps: usize,
    /// `(mu_max, mu_min)`: momentum runs antiphase to the learning rate.
    pub momentum_cycle: Option<(f64, f64)>,
}

impl Schedule {
    pub fn constant(eta: f64) -> Self {
        Schedule {
            kind: ScheduleKind::Constant,
            eta_init: eta,
            eta_max: eta,
            eta_min: eta,
            total_steps: usize::MAX,
            momentum_cycle: None,
        }
    }

    pub fn step_decay(eta_init: f64, breakpoints: Vec<Breakpoint>, total_steps: usize) -> Result<Self> {
        if breakpoints.windows(2).any(|w| w[1].step <= w[0].step) {
            return Err(Error::config("breakpoints must be strictly increasing"));
        }
        Ok(Schedule {
            kind: ScheduleKind::StepDecay { breakpoints },
            eta_init,
            eta_max: eta_init,
            eta_min: eta_init,
            total_steps,
            momentum_cycle: None,
        })
    }

    pub fn one_cycle(
        eta_init: f64,
        eta_max: f64,
        eta_min: f64,
        warm_fraction: f64,
        total_steps: usize,
    ) -> Result<Self> {
        if !(eta_min <= eta_init && eta_init <= eta_max) {
            return Err(Error::config(format!(
                "one-cycle needs eta_min <= eta_init <= eta_max, got {eta_min}/{eta_init}/{eta_max}"
            )));
        }
        if !(warm_fraction > 0.0 && warm_fraction < 1.0) {
            return Err(Error::config("warm_fraction must lie in (0,1)"));
        }
        if total_steps < 1 {
            return Err(Error::config("total_steps must be >= 1"));
        }
        Ok(Schedule {
            kind: ScheduleKind::OneCycle { warm_fraction },
            eta_init,
            eta_max,
            eta_min,
            total_steps,
            momentum_cycle: None,
        })
    }

    pub fn cosine(eta_init: f64, eta_min: f64, total_steps: usize) -> Result<Self> {
        if total_steps < 1 {
            return Err(Error::config("total_steps must be >= 1"));
        }
        Ok(Schedule {
            kind: ScheduleKind::Cosine,
            eta_init,
            eta_max: eta_init,
            eta_min,
            total_steps,
            momentum_cycle: None,
        })
    }

    pub fn linear(
        eta_init: f64,
        eta_min: f64,
        hold_fraction: f64,
        decay_end_fraction: f64,
        total_steps: usize,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&hold_fraction)
            || decay_end_fraction <= hold_fraction
            || decay_end_fraction > 1.0
        {
            return Err(Error::config("need 0 <= hold < decay_end <= 1"));
        }
        Ok(Schedule {
            kind: ScheduleKind::Linear {
                hold_fraction,
                decay_end_fraction,
            },
            eta_init,
            eta_max: eta_init,
            eta_min,
            total_steps,
            momentum_cycle: None,
        })
    }

    pub fn with_momentum_cycle(mut self, mu_max: f64, mu_min: f64) -> Self {
        self.momentum_cycle = Some((mu_max, mu_min));
        self
    }

    fn warm_steps(&self, warm_fraction: f64) -> f64 {
        warm_fraction * self.total_steps as f64
    }

    /// Learning rate at step `t`, `0 <= t <= total_steps`.
    pub fn lr_at(&self, t: usize) -> Result<f64> {
        if t > self.total_steps {
            return Err(Error::config(format!(
                "step {t} beyond schedule length {}",
                self.total_steps
            )));
        }
        Ok(match &self.kind {
            ScheduleKind::Constant => self.eta_init,
            ScheduleKind::StepDecay { breakpoints } => {
                let mut lr = self.eta_init;
                for bp in breakpoints {
                    if t >= bp.step {
                        lr *= bp.factor;
                    }
                }
                lr
            }
            ScheduleKind::OneCycle { warm_fraction } => {
                let warm = self.warm_steps(*warm_fraction);
                let tf = t as f64;
                if t == 0 {
                    self.eta_init
                } else if tf < warm {
                    self.eta_init
                        + 0.5 * (self.eta_max - self.eta_init) * (1.0 - (PI * tf / warm).cos())
                } else if tf == warm {
                    self.eta_max
                } else if t == self.total_steps {
                    self.eta_min
                } else {
                    let cool = self.total_steps as f64 - warm;
                    self.eta_min
                        + 0.5 * (self.eta_max - self.eta_min)
                            * (1.0 + (PI * (tf - warm) / cool).cos())
                }
            }
            ScheduleKind::Cosine => {
                if t == 0 {
                    self.eta_init
                } else if t == self.total_steps {
                    self.eta_min
                } else {
                    let frac = t as f64 / self.total_steps as f64;
                    self.eta_min
                        + 0.5 * (self.eta_init - self.eta_min) * (1.0 + (PI * frac).cos())
                }
            }
            ScheduleKind::Linear {
                hold_fraction,
                decay_end_fraction,
            } => {
                let frac = t as f64 / self.total_steps as f64;
                if frac <= *hold_fraction {
                    self.eta_init
                } else if frac >= *decay_end_fraction {
                    self.eta_min
                } else {
                    let progress = (frac - hold_fraction) / (decay_end_fraction - hold_fraction);
                    self.eta_init + (self.eta_min - self.eta_init) * progress
                }
            }
        })
    }

    /// Momentum at step `t`: the mirrored cycle (`mu_max` at the ends,
    /// `mu_min` where the learning rate peaks). Only defined for schedules
    /// carrying a momentum cycle.
    pub fn momentum_at(&self, t: usize) -> Result<f64> {
        let (mu_max, mu_min) = self
            .momentum_cycle
            .ok_or_else(|| Error::config("schedule has no momentum cycle"))?;
        if t > self.total_steps {
            return Err(Error::config(format!(
                "step {t} beyond schedule length {}",
                self.total_steps
            )));
        }
        let warm = match &self.kind {
            ScheduleKind::OneCycle { warm_fraction } => self.warm_steps(*warm_fraction),
            _ => {
                return Err(Error::config(
                    "momentum cycle is only defined for one-cycle schedules",
                ))
            }
        };
        let tf = t as f64;
        Ok(if t == 0 || t == self.total_steps {
            mu_max
        } else if tf < warm {
            mu_max - 0.5 * (mu_max - mu_min) * (1.0 - (PI * tf / warm).cos())
        } else if tf == warm {
            mu_min
        } else {
            let cool = self.total_steps as f64 - warm;
            mu_max - 0.5 * (mu_max - mu_min) * (1.0 + (PI * (tf - warm) / cool).cos())
        })
    }
}

use std::f64::consts::PI;

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_cycle() -> Schedule {
        Schedule::one_cycle(0.001, 0.1, 1e-7, 0.1, 100).unwrap()
    }

    #[test]
    fn one_cycle_endpoints_are_exact() {
        let s = paper_cycle();
        assert_eq!(s.lr_at(0).unwrap(), 0.001);
        assert_eq!(s.lr_at(10).unwrap(), 0.1);
        assert_eq!(s.lr_at(100).unwrap(), 1e-7);
    }

    #[test]
    fn one_cycle_cool_midpoint_matches_cosine_formula() {
        // Independent evaluation of the cool-phase cosine at its midpoint.
        let s = paper_cycle();
        let (warm, total) = (10.0, 100.0);
        let t = 55usize; // midpoint of the cool phase
        let expect =
            1e-7 + 0.5 * (0.1 - 1e-7) * (1.0 + (PI * (t as f64 - warm) / (total - warm)).cos());
        assert!((s.lr_at(t).unwrap() - expect).abs() < 1e-18);
    }

    #[test]
    fn one_cycle_is_continuous() {
        let s = paper_cycle();
        let warm = 10.0f64;
        let cool = 90.0f64;
        let bound = (0.1 - 1e-7) * PI / (2.0 * warm.min(cool));
        for t in 0..100 {
            let d = (s.lr_at(t + 1).unwrap() - s.lr_at(t).unwrap()).abs();
            assert!(d <= bound, "jump {d} at t={t}");
        }
    }

    #[test]
    fn step_decay_paper_recipe() {
        let s = Schedule::step_decay(
            0.1,
            vec![
                Breakpoint { step: 50, factor: 0.1 },
                Breakpoint { step: 90, factor: 0.1 },
            ],
            100,
        )
        .unwrap();
        assert!((s.lr_at(49).unwrap() - 0.1).abs() < 1e-15);
        assert!((s.lr_at(51).unwrap() - 0.01).abs() < 1e-15);
        assert!((s.lr_at(95).unwrap() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn step_decay_rejects_unordered_breakpoints() {
        assert!(Schedule::step_decay(
            0.1,
            vec![
                Breakpoint { step: 50, factor: 0.1 },
                Breakpoint { step: 50, factor: 0.1 },
            ],
            100,
        )
        .is_err());
    }

    #[test]
    fn constant_ignores_step() {
        let s = Schedule::constant(0.01);
        for t in [0usize, 17, 100_000] {
            assert_eq!(s.lr_at(t).unwrap(), 0.01);
        }
    }

    #[test]
    fn linear_holds_then_decays() {
        let s = Schedule::linear(0.1, 0.001, 0.5, 0.9, 100).unwrap();
        assert_eq!(s.lr_at(0).unwrap(), 0.1);
        assert_eq!(s.lr_at(50).unwrap(), 0.1);
        // Midpoint of the decay leg.
        assert!((s.lr_at(70).unwrap() - (0.1 + (0.001 - 0.1) * 0.5)).abs() < 1e-15);
        assert_eq!(s.lr_at(90).unwrap(), 0.001);
        assert_eq!(s.lr_at(100).unwrap(), 0.001);
    }

    #[test]
    fn out_of_range_step_errors() {
        let s = paper_cycle();
        assert!(s.lr_at(101).is_err());
    }

    #[test]
    fn momentum_mirrors_the_cycle() {
        let s = paper_cycle().with_momentum_cycle(0.95, 0.85);
        assert_eq!(s.momentum_at(0).unwrap(), 0.95);
        assert_eq!(s.momentum_at(10).unwrap(), 0.85);
        assert_eq!(s.momentum_at(100).unwrap(), 0.95);
        // Mid-warm value from the mirrored cosine, computed independently.
        let t = 5;
        let expect = 0.95 - 0.5 * (0.95 - 0.85) * (1.0 - (PI * 5.0 / 10.0).cos());
        assert!((s.momentum_at(t).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn momentum_requires_cycle() {
        assert!(paper_cycle().momentum_at(0).is_err());
    }

    #[test]
    fn lr_and_momentum_are_antiphase() {
        let s = paper_cycle().with_momentum_cycle(0.95, 0.85);
        let lrs: Vec<f64> = (0..=100).map(|t| s.lr_at(t).unwrap()).collect();
        let mus: Vec<f64> = (0..=100).map(|t| s.momentum_at(t).unwrap()).collect();
        let argmax_lr = lrs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let argmin_mu = mus
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax_lr, argmin_mu);
    }
}
