//! Dense-network numerics: layers, activations, Glorot initialization,
//! inverted dropout, manual backpropagation, and Adam.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Leaky ReLU with the given leak slope.
    LRelu(f64),
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::LRelu(beta) => a.max(0.0) + beta * a.min(0.0),
            Activation::Tanh => a.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-a).exp()),
            Activation::Identity => a,
        }
    }

    /// Derivative given the pre-activation `a` and the activation output `s`.
    fn derivative(self, a: f64, s: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LRelu(beta) => {
                if a > 0.0 {
                    1.0
                } else {
                    beta
                }
            }
            Activation::Tanh => 1.0 - s * s,
            Activation::Sigmoid => s * (1.0 - s),
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `fan_out x fan_in` weights (row-major), bias, activation.
#[derive(Debug, Clone)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

impl Layer {
    pub fn new(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Layer {
            weights: glorot_init(fan_in, fan_out, rng),
            bias: vec![0.0; fan_out],
            fan_in,
            fan_out,
            activation,
        }
    }
}

/// Glorot uniform initialization: U[-b, b] with b = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone)]
pub struct DenseNetwork {
    pub layers: Vec<Layer>,
    /// Inverted dropout applied to hidden-layer outputs in train mode.
    pub dropout_prob: f64,
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input fed to each layer (post-dropout output of the previous layer).
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
    /// Per hidden layer: survivor scale (0 or 1/(1-p)), `None` in infer mode.
    masks: Vec<Option<Vec<f64>>>,
    pub output: Vec<f64>,
}

impl ForwardCache {
    /// Post-activation output of layer `idx` (post-dropout in train mode).
    pub fn layer_output(&self, idx: usize) -> &[f64] {
        &self.activations[idx]
    }
}

/// Per-layer weight and bias gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

impl DenseNetwork {
    pub fn new(layers: Vec<Layer>, dropout_prob: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&dropout_prob) {
            return Err(Error::InvalidArgument(format!(
                "dropout_prob {dropout_prob} not in [0, 1)"
            )));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out != pair[1].fan_in {
                return Err(Error::DimensionMismatch(format!(
                    "layer fan_out {} feeds layer fan_in {}",
                    pair[0].fan_out, pair[1].fan_in
                )));
            }
        }
        Ok(DenseNetwork { layers, dropout_prob })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    /// Train-mode forward pass with dropout driven by `rng`.
    pub fn forward_train(&self, input: &[f64], rng: &mut impl Rng) -> Result<ForwardCache> {
        self.forward_impl(input, Mode::Train, Some(rng))
    }

    /// Infer-mode forward pass; dropout disabled.
    pub fn forward_infer(&self, input: &[f64]) -> Result<ForwardCache> {
        self.forward_impl::<rand_chacha::ChaCha8Rng>(input, Mode::Infer, None)
    }

    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_infer(input)?.output)
    }

    fn forward_impl<R: Rng>(
        &self,
        input: &[f64],
        mode: Mode,
        mut rng: Option<&mut R>,
    ) -> Result<ForwardCache> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input length {} but first layer fan_in {}",
                input.len(),
                self.input_dim()
            )));
        }
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre_activations = Vec::with_capacity(n_layers);
        let mut activations = Vec::with_capacity(n_layers);
        let mut masks = Vec::with_capacity(n_layers);
        let mut current = input.to_vec();

        for (li, layer) in self.layers.iter().enumerate() {
            let mut pre = layer.bias.clone();
            for (o, pre_o) in pre.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                let mut acc = 0.0;
                for (w, x) in row.iter().zip(&current) {
                    acc += w * x;
                }
                *pre_o += acc;
            }
            let mut act: Vec<f64> = pre.iter().map(|&a| layer.activation.apply(a)).collect();
            let is_hidden = li + 1 < n_layers;
            let mask = if is_hidden && mode == Mode::Train && self.dropout_prob > 0.0 {
                let rng = rng.as_deref_mut().expect("train mode requires an rng");
                let keep = 1.0 - self.dropout_prob;
                let m: Vec<f64> = act
                    .iter()
                    .map(|_| {
                        if rng.random::<f64>() < self.dropout_prob {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    })
                    .collect();
                for (a, s) in act.iter_mut().zip(&m) {
                    *a *= s;
                }
                Some(m)
            } else {
                None
            };
            inputs.push(std::mem::replace(&mut current, act.clone()));
            pre_activations.push(pre);
            activations.push(act);
            masks.push(mask);
        }

        Ok(ForwardCache {
            inputs,
            pre_activations,
            output: current,
            activations,
            masks,
        })
    }

    /// Reverse-mode gradients for a single sample. Returns the parameter
    /// gradients and the gradient with respect to the network input.
    pub fn backward(&self, cache: &ForwardCache, out_grad: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::DimensionMismatch(
                "cache does not match network depth".into(),
            ));
        }
        if out_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "output gradient length {} but output dim {}",
                out_grad.len(),
                self.output_dim()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut upstream = out_grad.to_vec();

        for (li, layer) in self.layers.iter().enumerate().rev() {
            if cache.inputs[li].len() != layer.fan_in {
                return Err(Error::DimensionMismatch(format!(
                    "cached input for layer {li} has stale shape"
                )));
            }
            let pre = &cache.pre_activations[li];
            let act = &cache.activations[li];
            let mask = cache.masks[li].as_ref();
            // delta = dL/d(pre-activation)
            let mut delta = vec![0.0; layer.fan_out];
            for o in 0..layer.fan_out {
                let scale = mask.map_or(1.0, |m| m[o]);
                // act holds the post-dropout value; undo the scale for the
                // saturating derivatives that depend on the raw output.
                let raw = if scale != 0.0 { act[o] / scale } else { layer.activation.apply(pre[o]) };
                delta[o] = upstream[o] * scale * layer.activation.derivative(pre[o], raw);
            }
            let input = &cache.inputs[li];
            let gw = &mut grads.weights[li];
            for o in 0..layer.fan_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut gw[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            grads.bias[li].copy_from_slice(&delta);

            let mut input_grad = vec![0.0; layer.fan_in];
            for o in 0..layer.fan_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (g, w) in input_grad.iter_mut().zip(row) {
                        *g += d * w;
                    }
                }
            }
            upstream = input_grad;
        }
        Ok((grads, upstream))
    }
}

/// Bias-corrected Adam over one network's parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    pub t: u64,
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &DenseNetwork, eta: f64) -> Self {
        AdamState {
            m_w: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            v_w: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            m_b: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            v_b: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            t: 0,
            eta,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Apply one descent step along `grads`.
    pub fn step(&mut self, net: &mut DenseNetwork, grads: &Gradients) {
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (li, layer) in net.layers.iter_mut().enumerate() {
            Self::update_slice(
                &mut layer.weights,
                &grads.weights[li],
                &mut self.m_w[li],
                &mut self.v_w[li],
                self.eta,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
            Self::update_slice(
                &mut layer.bias,
                &grads.bias[li],
                &mut self.m_b[li],
                &mut self.v_b[li],
                self.eta,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn update_slice(
        params: &mut [f64],
        grads: &[f64],
        m: &mut [f64],
        v: &mut [f64],
        eta: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        bc1: f64,
        bc2: f64,
    ) {
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= eta * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
