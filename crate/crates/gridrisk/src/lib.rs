//! Unsupervised operational-risk assessment for power-distribution feeders.
//!
//! The pipeline: windowed spatio-temporal voltage matrices are vectorized and
//! min-max normalized, a per-segment bidirectional adversarial network learns
//! latent features, an entropy index over the feature magnitudes is averaged
//! across the final training iterations, and the standardized index series is
//! mapped through a Student's t distribution to four operational-risk levels.
//! Threshold, PCA, and autoencoder baselines plug into the same index/risk
//! machinery for comparison.

pub mod baselines;
pub mod bigan;
pub mod config;
pub mod error;
pub mod eval;
pub mod index;
pub mod ingest;
pub mod neural;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
