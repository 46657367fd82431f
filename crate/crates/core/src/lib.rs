//! Task-state classification of multichannel BOLD-style time series.
//!
//! The crate bundles everything needed to go from per-region recordings to
//! an explained classifier:
//!
//! - [`tensor`] and [`ops`]: dense tensors and the forward/backward kernels
//!   (conv1d, max pooling, dense, LSTM, softmax, dropout, cross-entropy).
//! - [`optim`]: Adam with bias correction.
//! - [`models`]: the fixed 1D-CNN and BiLSTM architectures, prediction and
//!   checkpoints.
//! - [`data`]: recording ingest, z-scoring, segmentation, subject/task-aware
//!   splits and functional network groupings.
//! - [`training`]: early stopping, learning-rate reduction and grid search.
//! - [`metrics`]: confusion matrices, accuracy, precision, recall and F1.
//! - [`importance`]: grouped permutation importance with calibrated noise.
//! - [`behavior`]: effective behavior quartiles, Welch's t-test, Pearson
//!   correlation and the correct/incorrect group comparisons.
//! - [`synth`]: synthetic recordings with planted network signatures.
//! - [`cli`]: the `neurostate` command-line front end.

pub mod behavior;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod importance;
pub mod metrics;
pub mod models;
pub mod ops;
pub mod optim;
pub mod seed;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Parameter, Real, Tensor};

/// Number of task states.
pub const N_CLASSES: usize = 6;
/// Time points per segment.
pub const SEGMENT_LEN: usize = 277;
/// Shortest residual window that is zero-padded instead of discarded.
pub const MIN_SEGMENT_LEN: usize = 267;
/// Cortical (200) plus subcortical (14) regions.
pub const N_CHANNELS: usize = 214;
/// Number of cortical regions; the remaining channels are subcortical.
pub const N_CORTICAL: usize = 200;
/// Number of functional networks used as permutation units.
pub const N_NETWORKS: usize = 17;
