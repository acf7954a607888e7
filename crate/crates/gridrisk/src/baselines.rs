//! Comparison detectors: threshold analysis over per-unit limits, PCA
//! eigen-spectrum features, and a deep-autoencoder bottleneck.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ingest::NormalizedVector;
use crate::neural::{Activation, AdamState, DenseNetwork, Layer};

/// Voltage-violation threshold detector settings (per-unit).
#[derive(Debug, Clone, Copy)]
pub struct ThaConfig {
    pub lower_limit: f64,
    pub upper_limit: f64,
    pub threshold: f64,
}

impl Default for ThaConfig {
    fn default() -> Self {
        ThaConfig {
            lower_limit: 0.93,
            upper_limit: 1.07,
            threshold: 0.001,
        }
    }
}

impl ThaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lower_limit >= self.upper_limit {
            return Err(Error::InvalidConfig("tha lower limit must be below upper".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig("tha threshold must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// Fraction of ticks where any channel violates a limit, and whether that
/// fraction exceeds the alarm threshold. A tick counts once however many
/// channels violate.
pub fn tha_index(window: &[Vec<f64>], config: &ThaConfig) -> (f64, bool) {
    let ticks = window.first().map_or(0, Vec::len);
    if ticks == 0 {
        return (0.0, false);
    }
    let mut abnormal = 0usize;
    for t in 0..ticks {
        let violated = window
            .iter()
            .any(|row| row[t] < config.lower_limit || row[t] > config.upper_limit);
        if violated {
            abnormal += 1;
        }
    }
    let p_a = abnormal as f64 / ticks as f64;
    (p_a, p_a > config.threshold)
}

#[derive(Debug, Clone, Copy)]
pub struct PcaConfig {
    /// Required cumulative contribution of the retained eigenvalues.
    pub contribution: f64,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig { contribution: 0.95 }
    }
}

/// Leading eigen-spectrum of the row-centered sample covariance, truncated at
/// the configured contribution rate and normalized to sum 1.
pub fn pca_features(window: &[Vec<f64>], config: &PcaConfig) -> Result<Vec<f64>> {
    if !(0.0 < config.contribution && config.contribution <= 1.0) {
        return Err(Error::InvalidConfig("pca contribution must be in (0,1]".into()));
    }
    let p = window.len();
    let n_w = window.first().map_or(0, Vec::len);
    if p == 0 || n_w < 2 {
        return Err(Error::EmptyInput("pca needs a P x N_w window with N_w >= 2".into()));
    }
    // Row-center and form the P x P sample covariance.
    let centered: Vec<Vec<f64>> = window
        .iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / n_w as f64;
            row.iter().map(|v| v - mean).collect()
        })
        .collect();
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let mut acc = 0.0;
            for t in 0..n_w {
                acc += centered[i][t] * centered[j][t];
            }
            let c = acc / (n_w as f64 - 1.0);
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let mut eigenvalues: Vec<f64> = cov
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0))
        .collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateSeries("window has zero variance".into()));
    }
    let mut cumulative = 0.0;
    let mut k = eigenvalues.len();
    for (i, l) in eigenvalues.iter().enumerate() {
        cumulative += l;
        if cumulative / total >= config.contribution {
            k = i + 1;
            break;
        }
    }
    let retained: f64 = eigenvalues[..k].iter().sum();
    Ok(eigenvalues[..k].iter().map(|l| l / retained).collect())
}

/// Deep-autoencoder baseline settings. Hidden widths are fractions of the
/// input width, floor-applied.
#[derive(Debug, Clone)]
pub struct DaeConfig {
    pub encoder_fractions: [f64; 2],
    pub decoder_fractions: [f64; 2],
    pub feature_fraction: f64,
    pub learning_rate: f64,
    pub min_reconstruction_error: f64,
    pub max_iters: usize,
}

impl Default for DaeConfig {
    fn default() -> Self {
        DaeConfig {
            encoder_fractions: [0.6, 0.3],
            decoder_fractions: [0.3, 0.6],
            feature_fraction: 0.1,
            learning_rate: 0.001,
            min_reconstruction_error: 1e-5,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DaeOutcome {
    pub features: Vec<f64>,
    pub converged: bool,
    pub final_error: f64,
    pub iterations_run: usize,
}

/// Train a sigmoid autoencoder on the single normalized vector by squared
/// error until the mean reconstruction error drops below the configured
/// minimum; return the bottleneck activations in infer mode.
pub fn dae_features(
    x: &NormalizedVector,
    config: &DaeConfig,
    rng: &mut impl Rng,
) -> Result<DaeOutcome> {
    let width = x.values.len();
    if width < 10 {
        return Err(Error::InvalidArgument(format!(
            "dae needs input width >= 10, got {width}"
        )));
    }
    for f in config
        .encoder_fractions
        .iter()
        .chain(&config.decoder_fractions)
        .chain(std::iter::once(&config.feature_fraction))
    {
        if !(0.0 < *f && *f < 1.0) {
            return Err(Error::InvalidConfig("dae fractions must be in (0,1)".into()));
        }
    }
    let size = |f: f64| ((f * width as f64).floor() as usize).max(1);
    let widths = [
        width,
        size(config.encoder_fractions[0]),
        size(config.encoder_fractions[1]),
        size(config.feature_fraction),
        size(config.decoder_fractions[0]),
        size(config.decoder_fractions[1]),
        width,
    ];
    let layers = widths
        .windows(2)
        .map(|w| Layer::new(w[0], w[1], Activation::Sigmoid, rng))
        .collect();
    let mut net = DenseNetwork::new(layers, 0.0)?;
    let bottleneck_layer = 2; // output of the third layer is the feature
    let mut adam = AdamState::new(&net, config.learning_rate);

    let mut final_error = f64::INFINITY;
    let mut converged = false;
    let mut iterations_run = 0;
    for i in 1..=config.max_iters {
        iterations_run = i;
        let cache = net.forward_train(&x.values, rng)?;
        let residual: Vec<f64> = cache
            .output
            .iter()
            .zip(&x.values)
            .map(|(o, t)| o - t)
            .collect();
        let mse = residual.iter().map(|r| r * r).sum::<f64>() / width as f64;
        if !mse.is_finite() {
            return Err(Error::TrainingDiverged { iteration: i });
        }
        final_error = mse;
        if mse < config.min_reconstruction_error {
            converged = true;
            break;
        }
        // d(mse)/d(output) = 2 residual / width
        let out_grad: Vec<f64> = residual.iter().map(|r| 2.0 * r / width as f64).collect();
        let (grads, _) = net.backward(&cache, &out_grad)?;
        adam.step(&mut net, &grads);
    }

    let cache = net.forward_infer(&x.values)?;
    let features = cache.layer_output(bottleneck_layer).to_vec();
    Ok(DaeOutcome {
        features,
        converged,
        final_error,
        iterations_run,
    })
}
