//! Adversarial feature learning: generator, encoder, and discriminator over a
//! single normalized segment, trained until the averaged objective settles at
//! its -log 4 optimum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::ingest::NormalizedVector;
use crate::neural::{Activation, AdamState, DenseNetwork, Layer};

/// Probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] before logs.
pub const PROB_CLAMP: f64 = 1e-7;

pub const LOG4: f64 = 1.3862943611198906; // ln 4

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZDist {
    Uniform,
    Gaussian,
    Exponential,
}

impl std::str::FromStr for ZDist {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ZDist::Uniform),
            "gaussian" => Ok(ZDist::Gaussian),
            "exponential" => Ok(ZDist::Exponential),
            other => Err(Error::InvalidConfig(format!("unknown z_dist {other:?}"))),
        }
    }
}

/// How the encoder is updated each iteration. `Objective` descends V in E;
/// `Alg1Literal` reuses the discriminator-loss gradient for E.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderUpdate {
    Objective,
    Alg1Literal,
}

impl std::str::FromStr for EncoderUpdate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "objective" => Ok(EncoderUpdate::Objective),
            "alg1-literal" => Ok(EncoderUpdate::Alg1Literal),
            other => Err(Error::InvalidConfig(format!("unknown encoder_update {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BiganModel {
    pub generator: DenseNetwork,
    pub encoder: DenseNetwork,
    pub discriminator: DenseNetwork,
    pub latent_dim: usize,
    pub input_dim: usize,
}

#[derive(Debug, Clone)]
pub struct NetworkShapes {
    pub hidden_d: Vec<usize>,
    pub hidden_e: Vec<usize>,
    pub hidden_g: Vec<usize>,
    pub latent_dim: usize,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Inner discriminator steps per iteration (m).
    pub disc_steps: usize,
    /// Averaging window for the objective value (n).
    pub avg_window: usize,
    pub learning_rate: f64,
    /// LReLU leak slope for hidden layers.
    pub leak: f64,
    pub dropout_prob: f64,
    /// Required approximation error on |V_avg + log 4|.
    pub epsilon: f64,
    pub max_iters: usize,
    pub z_dist: ZDist,
    pub encoder_update: EncoderUpdate,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            disc_steps: 1,
            avg_window: 5,
            learning_rate: 1e-4,
            leak: 0.2,
            dropout_prob: 0.1,
            epsilon: 1e-4,
            max_iters: 100_000,
            z_dist: ZDist::Uniform,
            encoder_update: EncoderUpdate::Objective,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.disc_steps < 1 {
            return Err(Error::InvalidConfig("m must be >= 1".into()));
        }
        if self.avg_window < 1 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be > 0".into()));
        }
        if self.max_iters < self.avg_window {
            return Err(Error::InvalidConfig("max_iters must be >= n".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Encoder features from the last n iterations, oldest first.
    pub features: Vec<Vec<f64>>,
    pub value_history: Vec<f64>,
    pub converged: bool,
    pub iterations_run: usize,
}

/// Hidden layers use LReLU; output activations are sigmoid for D and G
/// (probabilities / [0,1] data) and tanh for E (features in [-1,1]).
pub fn build_model(
    input_dim: usize,
    shapes: &NetworkShapes,
    leak: f64,
    dropout_prob: f64,
    rng: &mut impl Rng,
) -> Result<BiganModel> {
    if input_dim == 0 || shapes.latent_dim == 0 {
        return Err(Error::InvalidArgument("zero input or latent dimension".into()));
    }
    for sizes in [&shapes.hidden_d, &shapes.hidden_e, &shapes.hidden_g] {
        if sizes.is_empty() {
            return Err(Error::InvalidArgument("hidden size list is empty".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("zero hidden layer size".into()));
        }
    }
    fn stack<R: Rng>(
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        out_act: Activation,
        leak: f64,
        dropout_prob: f64,
        rng: &mut R,
    ) -> Result<DenseNetwork> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = in_dim;
        for &h in hidden {
            layers.push(Layer::new(prev, h, Activation::LRelu(leak), rng));
            prev = h;
        }
        layers.push(Layer::new(prev, out_dim, out_act, rng));
        DenseNetwork::new(layers, dropout_prob)
    }
    let generator = stack(
        shapes.latent_dim,
        &shapes.hidden_g,
        input_dim,
        Activation::Sigmoid,
        leak,
        dropout_prob,
        rng,
    )?;
    let encoder = stack(
        input_dim,
        &shapes.hidden_e,
        shapes.latent_dim,
        Activation::Tanh,
        leak,
        dropout_prob,
        rng,
    )?;
    let discriminator = stack(
        input_dim + shapes.latent_dim,
        &shapes.hidden_d,
        1,
        Activation::Sigmoid,
        leak,
        dropout_prob,
        rng,
    )?;
    Ok(BiganModel {
        generator,
        encoder,
        discriminator,
        latent_dim: shapes.latent_dim,
        input_dim,
    })
}

pub fn sample_z(dist: ZDist, dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim)
        .map(|_| match dist {
            ZDist::Uniform => rng.random::<f64>(),
            ZDist::Gaussian => StandardNormal.sample(rng),
            ZDist::Exponential => Exp1.sample(rng),
        })
        .collect()
}

/// Deterministic per-segment RNG so parallel and serial schedules match.
pub fn segment_rng(seed: u64, segment_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(segment_index.wrapping_add(1));
    rng
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Single-sample estimate of the minimax objective
/// V = log D(x, E(x)) + log(1 - D(G(z), z)), dropout disabled.
pub fn value_function(model: &BiganModel, x: &NormalizedVector, z: &[f64]) -> Result<f64> {
    if x.values.len() != model.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "x length {} but model input_dim {}",
            x.values.len(),
            model.input_dim
        )));
    }
    if z.len() != model.latent_dim {
        return Err(Error::DimensionMismatch(format!(
            "z length {} but latent_dim {}",
            z.len(),
            model.latent_dim
        )));
    }
    let e_x = model.encoder.infer(&x.values)?;
    let g_z = model.generator.infer(z)?;
    let d_real = clamp_prob(model.discriminator.infer(&concat(&x.values, &e_x))?[0]);
    let d_fake = clamp_prob(model.discriminator.infer(&concat(&g_z, z))?[0]);
    Ok(d_real.ln() + (1.0 - d_fake).ln())
}

/// Encoder output in infer mode; entries in [-1, 1].
pub fn extract_features(model: &BiganModel, x: &NormalizedVector) -> Result<Vec<f64>> {
    model.encoder.infer(&x.values)
}

struct Trainer {
    model: BiganModel,
    adam_d: AdamState,
    adam_e: AdamState,
    adam_g: AdamState,
    cfg: TrainConfig,
}

impl Trainer {
    fn new(model: BiganModel, cfg: TrainConfig) -> Self {
        let eta = cfg.learning_rate;
        Trainer {
            adam_d: AdamState::new(&model.discriminator, eta),
            adam_e: AdamState::new(&model.encoder, eta),
            adam_g: AdamState::new(&model.generator, eta),
            model,
            cfg,
        }
    }

    /// One discriminator step: descend
    /// -log D(x, E(x)) - log(1 - D(G(z), z)).
    /// With `Alg1Literal` the same gradient also flows into E.
    fn disc_step(&mut self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
        let z = sample_z(self.cfg.z_dist, self.model.latent_dim, rng);
        let e_cache = self.model.encoder.forward_train(x, rng)?;
        let g_cache = self.model.generator.forward_train(&z, rng)?;
        let real_in = concat(x, &e_cache.output);
        let fake_in = concat(&g_cache.output, &z);
        let d_real_cache = self.model.discriminator.forward_train(&real_in, rng)?;
        let d_fake_cache = self.model.discriminator.forward_train(&fake_in, rng)?;
        let p_real = clamp_prob(d_real_cache.output[0]);
        let p_fake = clamp_prob(d_fake_cache.output[0]);
        let loss = -p_real.ln() - (1.0 - p_fake).ln();

        // dL/dD(real) = -1/p_real, dL/dD(fake) = 1/(1 - p_fake)
        let (real_grads, real_in_grad) = self
            .model
            .discriminator
            .backward(&d_real_cache, &[-1.0 / p_real])?;
        let (fake_grads, _) = self
            .model
            .discriminator
            .backward(&d_fake_cache, &[1.0 / (1.0 - p_fake)])?;
        let mut d_grads = real_grads;
        d_grads.add(&fake_grads);
        self.adam_d.step(&mut self.model.discriminator, &d_grads);

        if self.cfg.encoder_update == EncoderUpdate::Alg1Literal {
            let e_out_grad = &real_in_grad[self.model.input_dim..];
            let (e_grads, _) = self.model.encoder.backward(&e_cache, e_out_grad)?;
            self.adam_e.step(&mut self.model.encoder, &e_grads);
        }
        Ok(loss)
    }

    /// Non-saturating generator step: descend -log D(G(z), z).
    fn gen_step(&mut self, rng: &mut ChaCha8Rng) -> Result<f64> {
        let z = sample_z(self.cfg.z_dist, self.model.latent_dim, rng);
        let g_cache = self.model.generator.forward_train(&z, rng)?;
        let fake_in = concat(&g_cache.output, &z);
        let d_cache = self.model.discriminator.forward_train(&fake_in, rng)?;
        let p = clamp_prob(d_cache.output[0]);
        let loss = -p.ln();
        let (_, d_in_grad) = self.model.discriminator.backward(&d_cache, &[-1.0 / p])?;
        let g_out_grad = &d_in_grad[..self.model.input_dim];
        let (g_grads, _) = self.model.generator.backward(&g_cache, g_out_grad)?;
        self.adam_g.step(&mut self.model.generator, &g_grads);
        Ok(loss)
    }

    /// Encoder step per the minimax objective: descend log D(x, E(x)).
    fn enc_step(&mut self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
        let e_cache = self.model.encoder.forward_train(x, rng)?;
        let real_in = concat(x, &e_cache.output);
        let d_cache = self.model.discriminator.forward_train(&real_in, rng)?;
        let p = clamp_prob(d_cache.output[0]);
        let loss = p.ln();
        let (_, d_in_grad) = self.model.discriminator.backward(&d_cache, &[1.0 / p])?;
        let e_out_grad = &d_in_grad[self.model.input_dim..];
        let (e_grads, _) = self.model.encoder.backward(&e_cache, e_out_grad)?;
        self.adam_e.step(&mut self.model.encoder, &e_grads);
        Ok(loss)
    }
}

/// Run the per-segment adversarial training loop. Stops once the objective
/// averaged over the last n iterations is within epsilon of -log 4, or at
/// `max_iters` with `converged = false`. The last n infer-mode feature
/// snapshots are returned either way.
pub fn train_segment(
    x: &NormalizedVector,
    cfg: &TrainConfig,
    shapes: &NetworkShapes,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = build_model(x.values.len(), shapes, cfg.leak, cfg.dropout_prob, rng)?;
    let mut trainer = Trainer::new(model, cfg.clone());
    let n = cfg.avg_window;
    let mut value_history = Vec::new();
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut converged = false;
    let mut iterations_run = 0;

    for i in 1..=cfg.max_iters {
        iterations_run = i;
        for _ in 0..cfg.disc_steps {
            let loss = trainer.disc_step(&x.values, rng)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { iteration: i });
            }
        }
        let g_loss = trainer.gen_step(rng)?;
        if !g_loss.is_finite() {
            return Err(Error::TrainingDiverged { iteration: i });
        }
        if cfg.encoder_update == EncoderUpdate::Objective {
            let e_loss = trainer.enc_step(&x.values, rng)?;
            if !e_loss.is_finite() {
                return Err(Error::TrainingDiverged { iteration: i });
            }
        }

        // Record V with a fresh z and the infer-mode feature snapshot.
        let z = sample_z(cfg.z_dist, trainer.model.latent_dim, rng);
        let v = value_function(&trainer.model, x, &z)?;
        if !v.is_finite() {
            return Err(Error::TrainingDiverged { iteration: i });
        }
        value_history.push(v);
        features.push(extract_features(&trainer.model, x)?);
        if features.len() > n {
            features.remove(0);
        }

        if i >= n {
            let v_avg: f64 = value_history[i - n..].iter().sum::<f64>() / n as f64;
            if (v_avg + LOG4).abs() < cfg.epsilon {
                converged = true;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        features,
        value_history,
        converged,
        iterations_run,
    })
}
