//! Bootstrapped deep ensembles for neural network regression.
//!
//! A deep ensemble of mean-variance networks captures the spread caused by
//! random initialisation and batch order, but every member sees the same
//! targets, so the variability that comes from having a finite, noisy sample
//! is invisible to it. This crate adds that missing term with a cheap
//! parametric bootstrap: each member is checkpointed part-way through
//! training, fresh targets are simulated from the member's own predictive
//! distribution, and only the tail of training is repeated on them. The
//! disagreement between each member and its retrained twin estimates the
//! data-driven variance.
//!
//! The crate is organised bottom-up:
//!
//! * [`math`]: dense matrices, reproducible random streams and the
//!   distribution functions (normal, Student t, chi-square, gamma).
//! * [`network`]: the dual-head MLP, its Gaussian negative log-likelihood,
//!   ADAM, checkpointing and target/feature standardisation.
//! * [`ensemble`]: deep ensembles, bootstrapped deep ensembles and the naive
//!   bootstrap baseline.
//! * [`intervals`]: confidence and prediction intervals built from member
//!   predictions.
//! * [`simulate`]: random-forest and network ground truths with known `f`
//!   and `σ²`, and replicate datasets drawn from them.
//! * [`evaluation`]: coverage fractions, Brier scores, RMSE and the
//!   variance-decomposition statistics.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod intervals;
pub mod math;
pub mod network;
pub mod noise;
pub mod simulate;

pub use data::Dataset;
pub use error::{Error, Result};
pub use math::{Mat, RngStream};
pub use noise::NoiseModel;
