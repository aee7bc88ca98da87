//! Zero-bias cosine classifiers turned into abnormality detectors with
//! analytically bounded false-positive and false-negative rates, coupled with
//! Bernoulli quickest-change-detection charts for streaming alarms.
//!
//! The crate is organized bottom-up:
//!
//! - [`zb`]: the zero-bias (cosine fingerprint) head, a small dense feature
//!   extractor, and a float64 gradient-descent trainer.
//! - [`sphere`]: hyperspherical capacity analytics (σ-cap area ratios,
//!   distinguishable-class counts) and the Monte Carlo false-negative bound.
//! - [`detector`]: per-class Mahalanobis boundaries fitted on correctly
//!   classified training features, and the resulting performance envelope.
//! - [`qcd`]: CUSUM, windowed Bernoulli GLR and multi-CUSUM charts over the
//!   detector's binary output.
//! - [`harness`]: synthetic data, simulations, persistence, the streaming
//!   monitor and the end-to-end pipeline used by the CLI.

// `!(x >= 0.0)` is how NaN gets rejected along with negatives; the special
// function coefficients are kept exactly as published.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::needless_range_loop
)]

pub mod detector;
pub mod error;
pub mod harness;
pub mod qcd;
pub mod rng;
pub mod sphere;
pub mod zb;

pub use error::{Error, Result};

/// Column-major dense matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector.
pub type Vector = nalgebra::DVector<f64>;
