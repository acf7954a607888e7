//! Plain-text `key = value` run configuration covering every pipeline
//! tunable. Unknown keys are rejected; values are validated at load time.

use std::fs;
use std::path::Path;

use crate::baselines::{DaeConfig, PcaConfig, ThaConfig};
use crate::bigan::{EncoderUpdate, NetworkShapes, TrainConfig, ZDist};
use crate::error::{Error, Result};
use crate::index::TestFunction;
use crate::synth::{AnomalySpec, GeneratorConfig};

/// A layer width given either as an absolute neuron count or as a fraction
/// of the input width (floor-applied).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeSpec {
    Absolute(usize),
    Fraction(f64),
}

impl SizeSpec {
    pub fn resolve(self, input_width: usize) -> Result<usize> {
        let n = match self {
            SizeSpec::Absolute(n) => n,
            SizeSpec::Fraction(f) => (f * input_width as f64).floor() as usize,
        };
        if n == 0 {
            return Err(Error::InvalidConfig(format!(
                "size {self:?} resolves to zero at input width {input_width}"
            )));
        }
        Ok(n)
    }
}

fn parse_size(token: &str) -> Result<SizeSpec> {
    let token = token.trim();
    if token.contains('.') {
        let f: f64 = token
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad size {token:?}")))?;
        if !(0.0 < f && f < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "fractional size {token} must be in (0,1)"
            )));
        }
        Ok(SizeSpec::Fraction(f))
    } else {
        let n: usize = token
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad size {token:?}")))?;
        Ok(SizeSpec::Absolute(n))
    }
}

fn parse_size_list(value: &str) -> Result<Vec<SizeSpec>> {
    value.split(',').map(parse_size).collect()
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n_w: usize,
    pub n_s: usize,
    pub hidden_d: Vec<SizeSpec>,
    pub hidden_e: Vec<SizeSpec>,
    pub hidden_g: Vec<SizeSpec>,
    pub latent_dim: SizeSpec,
    pub disc_steps: usize,
    pub avg_window: usize,
    pub learning_rate: f64,
    pub leak: f64,
    pub dropout_prob: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub z_dist: ZDist,
    pub seed: Option<u64>,
    pub test_function: TestFunction,
    pub encoder_update: EncoderUpdate,
    pub slack_windows: usize,
    pub tha: ThaConfig,
    pub pca: PcaConfig,
    pub dae: DaeConfig,
    pub synth: GeneratorConfig,
    pub synth_seed: u64,
    pub anomalies: Vec<AnomalySpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_w: 96,
            n_s: 96,
            hidden_d: vec![
                SizeSpec::Fraction(0.5),
                SizeSpec::Fraction(0.3),
                SizeSpec::Fraction(0.1),
            ],
            hidden_e: vec![
                SizeSpec::Fraction(0.5),
                SizeSpec::Fraction(0.3),
                SizeSpec::Fraction(0.1),
            ],
            hidden_g: vec![
                SizeSpec::Fraction(0.1),
                SizeSpec::Fraction(0.3),
                SizeSpec::Fraction(0.5),
            ],
            latent_dim: SizeSpec::Absolute(64),
            disc_steps: 1,
            avg_window: 5,
            learning_rate: 1e-4,
            leak: 0.2,
            dropout_prob: 0.1,
            epsilon: 1e-4,
            max_iters: 100_000,
            z_dist: ZDist::Uniform,
            seed: None,
            test_function: TestFunction::Entropy,
            encoder_update: EncoderUpdate::Objective,
            slack_windows: 1,
            tha: ThaConfig::default(),
            pca: PcaConfig::default(),
            dae: DaeConfig::default(),
            synth: GeneratorConfig::default(),
            synth_seed: 0,
            anomalies: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", idx + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(key, value)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", idx + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value {value:?} for {key}")))
        }
        match key {
            "n_w" => self.n_w = num(key, value)?,
            "n_s" => self.n_s = num(key, value)?,
            "hidden_d" => self.hidden_d = parse_size_list(value)?,
            "hidden_e" => self.hidden_e = parse_size_list(value)?,
            "hidden_g" => self.hidden_g = parse_size_list(value)?,
            "latent_dim" => self.latent_dim = parse_size(value)?,
            "m" => self.disc_steps = num(key, value)?,
            "n" => self.avg_window = num(key, value)?,
            "eta" => self.learning_rate = num(key, value)?,
            "beta" => self.leak = num(key, value)?,
            "dropout_prob" => self.dropout_prob = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "max_iters" => self.max_iters = num(key, value)?,
            "z_dist" => self.z_dist = value.parse()?,
            "seed" => self.seed = Some(num(key, value)?),
            "test_function" => self.test_function = value.parse()?,
            "encoder_update" => self.encoder_update = value.parse()?,
            "slack_windows" => self.slack_windows = num(key, value)?,
            "tha_lower" => self.tha.lower_limit = num(key, value)?,
            "tha_upper" => self.tha.upper_limit = num(key, value)?,
            "tha_p_th" => self.tha.threshold = num(key, value)?,
            "pca_contribution" => self.pca.contribution = num(key, value)?,
            "dae_eta" => self.dae.learning_rate = num(key, value)?,
            "dae_min_error" => self.dae.min_reconstruction_error = num(key, value)?,
            "dae_max_iters" => self.dae.max_iters = num(key, value)?,
            "synth_p" => self.synth.channels = num(key, value)?,
            "synth_t" => self.synth.ticks = num(key, value)?,
            "synth_baseline" => self.synth.baseline = num(key, value)?,
            "synth_noise_sigma" => self.synth.noise_sigma = num(key, value)?,
            "synth_coupling" => self.synth.coupling = num(key, value)?,
            "synth_tick_seconds" => self.synth.tick_seconds = num(key, value)?,
            "synth_seed" => self.synth_seed = num(key, value)?,
            "anomaly" => self.anomalies.push(parse_anomaly(value)?),
            other => {
                return Err(Error::InvalidConfig(format!("unknown key {other:?}")));
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.n_w == 0 || self.n_s == 0 {
            return Err(Error::InvalidConfig("n_w and n_s must be positive".into()));
        }
        if self.disc_steps < 1 || self.avg_window < 1 {
            return Err(Error::InvalidConfig("m and n must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be > 0".into()));
        }
        if self.max_iters < self.avg_window {
            return Err(Error::InvalidConfig("max_iters must be >= n".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidConfig("dropout_prob must be in [0,1)".into()));
        }
        if self.leak < 0.0 {
            return Err(Error::InvalidConfig("beta must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("eta must be > 0".into()));
        }
        if !(0.0 < self.pca.contribution && self.pca.contribution <= 1.0) {
            return Err(Error::InvalidConfig("pca_contribution must be in (0,1]".into()));
        }
        self.tha.validate()?;
        Ok(())
    }

    /// Resolve network shapes against the vectorized segment width.
    pub fn shapes(&self, input_width: usize) -> Result<NetworkShapes> {
        let resolve = |specs: &[SizeSpec]| -> Result<Vec<usize>> {
            specs.iter().map(|s| s.resolve(input_width)).collect()
        };
        Ok(NetworkShapes {
            hidden_d: resolve(&self.hidden_d)?,
            hidden_e: resolve(&self.hidden_e)?,
            hidden_g: resolve(&self.hidden_g)?,
            latent_dim: self.latent_dim.resolve(input_width)?,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            disc_steps: self.disc_steps,
            avg_window: self.avg_window,
            learning_rate: self.learning_rate,
            leak: self.leak,
            dropout_prob: self.dropout_prob,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            z_dist: self.z_dist,
            encoder_update: self.encoder_update,
        }
    }

    /// Seed precedence: CLI flag, then config `seed`, then `GRIDRISK_SEED`,
    /// then 0.
    pub fn resolve_seed(&self, cli_seed: Option<u64>) -> u64 {
        cli_seed
            .or(self.seed)
            .or_else(|| {
                std::env::var("GRIDRISK_SEED")
                    .ok()
                    .and_then(|s| s.parse().ok())
            })
            .unwrap_or(0)
    }
}

/// Anomaly line format: `<channels ;-separated> <start> <end> <kind> <magnitude>`.
fn parse_anomaly(value: &str) -> Result<AnomalySpec> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 5 {
        return Err(Error::InvalidConfig(format!(
            "anomaly needs 5 fields `channels start end kind magnitude`, got {value:?}"
        )));
    }
    let channels = parts[0]
        .split(';')
        .map(|c| c.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::InvalidConfig(format!("bad anomaly channels {:?}", parts[0])))?;
    let bad = |field: &str| Error::InvalidConfig(format!("bad anomaly field {field:?}"));
    Ok(AnomalySpec {
        channels,
        start_tick: parts[1].parse().map_err(|_| bad(parts[1]))?,
        end_tick: parts[2].parse().map_err(|_| bad(parts[2]))?,
        kind: parts[3].parse()?,
        magnitude: parts[4].parse().map_err(|_| bad(parts[4]))?,
    })
}
