//! Neural networks with trainable product layers.
//!
//! Product neurons multiply their inputs after weighting each one with the
//! quasi-exponentiation `f(h, σ(w)) = 1 − σ(w)(1 − h)`, which interpolates
//! between ignoring an input (`σ(w) → 0`) and passing it through
//! (`σ(w) → 1`). Stacked with ordinary tanh summation layers and trained by
//! plain backpropagation, they solve parity-style problems with very small
//! hidden layers.
//!
//! - [`numerics`]: seeded RNG streams, dense matrices, the logistic function.
//! - [`layers`]: tanh-sum and product layers with forward/backward passes.
//! - [`network`]: layer stacks, online SGD, JSON weight dumps.
//! - [`gradcheck`]: central finite-difference oracle for the backward pass.
//! - [`experiments`]: parity and spirals datasets, convergence trials,
//!   batches, sweeps, CSV/JSON records.
//! - [`cli`]: the `quasinet` command-line front end.

pub mod cli;
mod error;
pub mod experiments;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod numerics;

pub use error::{Error, Result};
pub use experiments::{Dataset, RunRecord, TrainConfig};
pub use layers::{quasi_pow, Layer, LayerKind, ProductLayer, TanhSumLayer};
pub use network::{predict_correct, LayerSpec, Network, NetworkSpec};
pub use numerics::{logistic, Matrix, RngState};
