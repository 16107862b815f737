//! Subnetwork ensembles for dense feed-forward networks.
//!
//! Train a parent network, spawn child networks by perturbing sampled
//! subnetworks — Gaussian noise mutation, pruning, or stochastic mask
//! annealing — then combine, score, and analyze the resulting ensembles.
//!
//! Module map:
//! - [`nn`], [`optim`], [`train`], [`schedules`]: the trainable substrate.
//! - [`masking`]: subnetwork masks, neural partitioning, mask distances.
//! - [`perturb`]: noise mutation (plain/mirrored) and pruning children.
//! - [`stochastic`]: probability masks and annealing schedules.
//! - [`ensemble`]: prediction combination, selection, trust-region search,
//!   and the end-to-end noisy/sparse/stochastic pipelines.
//! - [`diversity`]: output diversity metrics, saliency, feature
//!   visualization, loss-landscape slices.
//! - [`phash`] / [`image`]: perceptual hashes over PGM/PPM images.
//! - [`data`] / [`model_io`]: datasets, splits, and model files.

pub mod data;
pub mod diversity;
pub mod ensemble;
pub mod error;
pub mod image;
pub mod masking;
pub mod matrix;
pub mod metrics;
pub mod model_io;
pub mod nn;
pub mod optim;
pub mod perturb;
pub mod phash;
pub mod rng;
pub mod schedules;
pub mod stochastic;
pub mod train;

pub use data::Dataset;
pub use error::{Error, Result};
pub use masking::{Mask, NetMask, SamplerSpec};
pub use matrix::Matrix;
pub use metrics::PredictionSet;
pub use nn::{Activation, DenseLayer, DenseNet, Gradient};
pub use optim::{OptimizerKind, OptimizerState};
pub use perturb::{ChildNetwork, FreezeSet, NoiseSpec};
pub use phash::{HashAlgorithm, HashDigest};
pub use schedules::Schedule;
pub use stochastic::ProbMask;
pub use train::{TrainConfig, TrainHook};
