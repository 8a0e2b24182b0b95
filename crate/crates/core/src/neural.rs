//! Dense feed-forward network: rectifier hidden layers, identity output,
//! inverted dropout on hidden activations, mean-squared-error loss and an
//! Adam optimizer.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::stochastic::RngStream;

/// Version tag written into weight documents.
pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum NeuralError {
    ShapeMismatch { expected: usize, got: usize },
    InvalidArchitecture(String),
    EmptyBatch,
    NonFinite,
}

impl fmt::Display for NeuralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShapeMismatch { expected, got } => write!(f, "shape mismatch: expected {expected}, got {got}"),
            Self::InvalidArchitecture(msg) => write!(f, "invalid architecture: {msg}"),
            Self::EmptyBatch => f.write_str("empty minibatch"),
            Self::NonFinite => f.write_str("non-finite value"),
        }
    }
}

impl core::error::Error for NeuralError {}

/// Affine layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.biases.iter().enumerate().map(|(o, &b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    dropout_rate: f64,
}

/// Parameter-shaped buffer: gradients, or optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }
}

/// `n` input rows with matching target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Minibatch {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self, NeuralError> {
        if inputs.is_empty() {
            return Err(NeuralError::EmptyBatch);
        }
        if inputs.len() != targets.len() {
            return Err(NeuralError::ShapeMismatch { expected: inputs.len(), got: targets.len() });
        }
        if inputs.iter().chain(&targets).flatten().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite);
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

impl Mlp {
    /// Random network; every parameter uniform in `±1/√fan_in`.
    pub fn new(layer_dims: &[usize], dropout_rate: f64, stream: &mut RngStream) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(layer_dims, dropout_rate)?;
        for layer in &mut net.layers {
            let bound = 1.0 / libm::sqrt(layer.inputs as f64);
            for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *p = (2.0 * stream.uniform() - 1.0) * bound;
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_dims: &[usize], dropout_rate: f64) -> Result<Self, NeuralError> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(NeuralError::InvalidArchitecture(format!(
                "need at least two positive layer sizes, got {layer_dims:?}"
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(NeuralError::InvalidArchitecture(format!("dropout rate {dropout_rate} outside [0, 1)")));
        }
        Ok(Self {
            layers: layer_dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            dropout_rate,
        })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NeuralError> {
        if input.len() != self.input_dim() {
            return Err(NeuralError::ShapeMismatch { expected: self.input_dim(), got: input.len() });
        }
        Ok(())
    }

    /// Inference pass (dropout off).
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&x, &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            core::mem::swap(&mut x, &mut z);
        }
        Ok(x)
    }

    /// Forward pass; with `training` set, hidden activations are dropped
    /// with probability `dropout_rate` and survivors scaled by `1/(1-rate)`.
    pub fn forward(&self, input: &[f64], training: bool, stream: &mut RngStream) -> Result<Vec<f64>, NeuralError> {
        if !training || self.dropout_rate == 0.0 {
            return self.predict(input);
        }
        self.check_input(input)?;
        Ok(self.trace(input, Some(stream)).output)
    }

    fn trace(&self, input: &[f64], mut stream: Option<&mut RngStream>) -> Trace {
        let last = self.layers.len() - 1;
        let keep = 1.0 - self.dropout_rate;
        let mut activations = vec![input.to_vec()];
        let mut masks = Vec::with_capacity(last);
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(&activations[i], &mut z);
            if i < last {
                // mask entry: 0 for inactive/dropped units, else the scale
                let mask: Vec<f64> = z
                    .iter()
                    .map(|&v| {
                        let dropped = match stream.as_deref_mut() {
                            Some(s) if self.dropout_rate > 0.0 => !s.chance(keep),
                            _ => false,
                        };
                        if v <= 0.0 || dropped {
                            0.0
                        } else if stream.is_some() && self.dropout_rate > 0.0 {
                            1.0 / keep
                        } else {
                            1.0
                        }
                    })
                    .collect();
                z.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                masks.push(mask);
            }
            activations.push(z);
        }
        Trace {
            output: activations.pop().expect("at least one layer"),
            activations,
            masks,
        }
    }

    /// Mean (over the batch) of the mean squared error, and its gradient
    /// with respect to every parameter. Dropout is active when `stream` is
    /// given; the same masks serve the forward and backward passes.
    pub fn backward(&self, batch: &Minibatch, mut stream: Option<&mut RngStream>) -> Result<(f64, Gradients), NeuralError> {
        if batch.is_empty() {
            return Err(NeuralError::EmptyBatch);
        }
        let out_dim = self.output_dim();
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        let scale = 2.0 / (batch.len() * out_dim) as f64;
        for (x, t) in batch.inputs.iter().zip(&batch.targets) {
            self.check_input(x)?;
            if t.len() != out_dim {
                return Err(NeuralError::ShapeMismatch { expected: out_dim, got: t.len() });
            }
            let trace = self.trace(x, stream.as_deref_mut());
            let mut delta: Vec<f64> = trace.output.iter().zip(t).map(|(y, t)| y - t).collect();
            loss += delta.iter().map(|d| d * d).sum::<f64>() / out_dim as f64;
            delta.iter_mut().for_each(|d| *d *= scale);

            for i in (0..self.layers.len()).rev() {
                let layer = &self.layers[i];
                let input = &trace.activations[i];
                let g = &mut grads.layers[i];
                for (o, &d) in delta.iter().enumerate() {
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(gw, &a)| *gw += d * a);
                }
                if i == 0 {
                    break;
                }
                let mask = &trace.masks[i - 1];
                let mut prev = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    prev.iter_mut().zip(row).for_each(|(p, &w)| *p += d * w);
                }
                prev.iter_mut().zip(mask).for_each(|(p, &m)| *p *= m);
                delta = prev;
            }
        }
        let loss = loss / batch.len() as f64;
        if !loss.is_finite() {
            return Err(NeuralError::NonFinite);
        }
        Ok((loss, grads))
    }

    /// Serializable snapshot of every parameter.
    pub fn to_document(&self) -> WeightDocument {
        WeightDocument {
            format_version: WEIGHTS_FORMAT_VERSION,
            layer_dims: self.layer_dims(),
            dropout_rate: self.dropout_rate,
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    weights: l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect(),
                    biases: l.biases.clone(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &WeightDocument) -> Result<Self, NeuralError> {
        if doc.format_version != WEIGHTS_FORMAT_VERSION {
            return Err(NeuralError::InvalidArchitecture(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        let mut net = Self::zeros(&doc.layer_dims, doc.dropout_rate)?;
        if doc.layers.len() != net.layers.len() {
            return Err(NeuralError::ShapeMismatch { expected: net.layers.len(), got: doc.layers.len() });
        }
        for (layer, src) in net.layers.iter_mut().zip(&doc.layers) {
            if src.weights.len() != layer.outputs {
                return Err(NeuralError::ShapeMismatch { expected: layer.outputs, got: src.weights.len() });
            }
            if src.biases.len() != layer.outputs {
                return Err(NeuralError::ShapeMismatch { expected: layer.outputs, got: src.biases.len() });
            }
            layer.weights.clear();
            for row in &src.weights {
                if row.len() != layer.inputs {
                    return Err(NeuralError::ShapeMismatch { expected: layer.inputs, got: row.len() });
                }
                layer.weights.extend_from_slice(row);
            }
            layer.biases.copy_from_slice(&src.biases);
        }
        if net.params_mut().any(|p| !p.is_finite()) {
            return Err(NeuralError::NonFinite);
        }
        Ok(net)
    }
}

struct Trace {
    /// Input followed by each hidden layer's (masked) activation.
    activations: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDocument {
    /// One row per output unit.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

/// Portable form of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightDocument {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub layers: Vec<LayerDocument>,
}

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Gradients,
    second: Gradients,
}

impl OptimizerState {
    pub fn adam(net: &Mlp, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `net` along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<(), NeuralError> {
        let n = net.num_params();
        let got = grads.iter().count();
        if got != n || self.first.iter().count() != n {
            return Err(NeuralError::ShapeMismatch { expected: n, got });
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let moments = self.first.iter_mut().zip(self.second.iter_mut());
        for ((p, &g), (m, v)) in net.params_mut().zip(grads.iter()).zip(moments) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / (libm::sqrt(*v / c2) + eps);
        }
        Ok(())
    }
}
