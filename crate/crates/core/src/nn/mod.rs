//! Sequential multilayer perceptrons with reverse-mode gradients.
//!
//! A [`Network`] is an ordered list of dense layers `y = act(W x + b)`.
//! Gradients are taken with respect to both the parameters and the input,
//! the latter being what adversarial perturbations need.

mod io;
mod lipschitz;
mod optim;

pub use io::{load_network, network_from_json, network_to_json, save_network};
pub use lipschitz::{layer_norm, lipschitz_upper_bound, NormKind};
pub use optim::{optimizer_step, AdamConfig, OptimizerState};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    Domain(&'static str),
    #[error("backward pass requested without a recorded forward pass")]
    NoForwardPass,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid network: {0}")]
    Validation(String),
    #[error("unsupported network file version {found} (supported: {supported})")]
    Version { found: u64, supported: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y = act(z)`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(NnError::Config(format!("unsupported activation `{other}`"))),
        }
    }
}

/// Dense layer. Weights are row-major with shape `(rows, cols) = (out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        rows: usize,
        cols: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(NnError::Validation("layer with zero dimension".into()));
        }
        if weights.len() != rows * cols {
            return Err(NnError::Validation(format!(
                "weights hold {} entries, expected {rows}x{cols}",
                weights.len()
            )));
        }
        if bias.len() != rows {
            return Err(NnError::Validation(format!(
                "bias holds {} entries, expected {rows}",
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(NnError::Validation("non-finite parameter".into()));
        }
        Ok(Self {
            rows,
            cols,
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let weights = (0..rows * cols)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            rows,
            cols,
            weights,
            bias: vec![0.0; rows],
            activation,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.cols).zip(&self.bias).map(
            |(row, b)| {
                let z = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
                self.activation.apply(z)
            },
        ));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Intermediate activations of one forward pass, consumed by
/// [`Network::backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    // values[0] is the input, values[k + 1] the output of layer k
    values: Vec<Vec<f64>>,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn output(&self) -> Option<&[f64]> {
        self.values.last().map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub params: Vec<LayerGrad>,
    pub input: Vec<f64>,
}

impl GradientBundle {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            params: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            input: vec![0.0; net.input_dim()],
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
        for v in &mut self.input {
            *v *= factor;
        }
    }

    /// Adds `2 * lambda * q` for every parameter `q`, the gradient of
    /// `lambda * ||q||^2`.
    pub fn add_l2(&mut self, net: &Network, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        for (g, l) in self.params.iter_mut().zip(&net.layers) {
            for (gw, w) in g.weights.iter_mut().zip(&l.weights) {
                *gw += 2.0 * lambda * w;
            }
            for (gb, b) in g.bias.iter_mut().zip(&l.bias) {
                *gb += 2.0 * lambda * b;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite()) && self.input.iter().all(|v| v.is_finite())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.params
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.bias))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.params
            .iter_mut()
            .flat_map(|g| g.weights.iter_mut().chain(g.bias.iter_mut()))
    }

    fn matches(&self, net: &Network) -> bool {
        self.params.len() == net.layers.len()
            && self
                .params
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NnError::Validation("network has no layers".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].rows != pair[1].cols {
                return Err(NnError::Validation(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].rows,
                    k + 1,
                    pair[1].cols
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Randomly initialized MLP with `sizes = [input, hidden.., output]`;
    /// hidden layers use `hidden`, the last layer `output`.
    pub fn mlp<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k == last { output } else { hidden };
                Layer::glorot(w[1], w[0], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .map(|v| v * v)
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(NnError::Shape(format!(
                "input has {} components, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Domain("network input"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Domain("network output"));
        }
        Ok(cur)
    }

    /// Forward pass that records activations on `tape` for a later
    /// [`backward`](Self::backward).
    pub fn forward_recorded(&self, x: &[f64], tape: &mut Tape) -> Result<Vec<f64>> {
        tape.values.clear();
        self.check_input(x)?;
        tape.values.push(x.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.rows);
            layer.forward_into(tape.values.last().expect("non-empty"), &mut out);
            tape.values.push(out);
        }
        let out = tape.values.last().expect("non-empty").clone();
        if out.iter().any(|v| !v.is_finite()) {
            tape.values.clear();
            return Err(NnError::Domain("network output"));
        }
        Ok(out)
    }

    /// Gradients of `upstream . output` for the pass recorded on `tape`.
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Result<GradientBundle> {
        let mut grads = GradientBundle::zeros_like(self);
        self.backward_accumulate(tape, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward) but adds into an existing bundle;
    /// the input gradient is overwritten.
    pub fn backward_accumulate(
        &self,
        tape: &Tape,
        upstream: &[f64],
        grads: &mut GradientBundle,
    ) -> Result<()> {
        if tape.values.is_empty() {
            return Err(NnError::NoForwardPass);
        }
        if tape.values.len() != self.layers.len() + 1
            || tape.values[0].len() != self.input_dim()
        {
            return Err(NnError::Shape("tape was recorded on a different network".into()));
        }
        if upstream.len() != self.output_dim() {
            return Err(NnError::Shape(format!(
                "upstream has {} components, network outputs {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if !grads.matches(self) {
            return Err(NnError::Shape("gradient bundle does not mirror network".into()));
        }
        let mut delta: Vec<f64> = upstream.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let input = &tape.values[k];
            let output = &tape.values[k + 1];
            for (d, y) in delta.iter_mut().zip(output) {
                *d *= layer.activation.derivative_from_output(*y);
            }
            let g = &mut grads.params[k];
            for (r, d) in delta.iter().enumerate() {
                g.bias[r] += d;
                let row = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
            let mut prev = vec![0.0; layer.cols];
            for (row, d) in layer.weights.chunks_exact(layer.cols).zip(&delta) {
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            delta = prev;
        }
        grads.input = delta;
        Ok(())
    }

    /// Polyak averaging `self <- (1 - tau) self + tau src`.
    pub fn soft_update_from(&mut self, src: &Network, tau: f64) -> Result<()> {
        if self.layers.len() != src.layers.len()
            || self
                .layers
                .iter()
                .zip(&src.layers)
                .any(|(a, b)| a.rows != b.rows || a.cols != b.cols)
        {
            return Err(NnError::Shape("soft update between different architectures".into()));
        }
        for (dst, s) in self.layers.iter_mut().zip(&src.layers) {
            for (a, b) in dst
                .weights
                .iter_mut()
                .chain(dst.bias.iter_mut())
                .zip(s.weights.iter().chain(&s.bias))
            {
                *a = (1.0 - tau) * *a + tau * b;
            }
        }
        Ok(())
    }
}
