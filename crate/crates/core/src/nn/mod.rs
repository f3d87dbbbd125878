//! Dense feed-forward networks with hand-derived gradients.
//!
//! Parameters live in one flat buffer laid out layer by layer: the weight
//! matrix of a layer in row-major `[out][in]` order, followed by its bias
//! vector. [`GradientTape`] uses the same layout, so optimizers and FedAvg
//! can treat a network as a plain vector.

pub(crate) mod io;
mod optim;

pub use io::{read_net, write_net};
pub use optim::{sgd_step, Adam, AdamConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the post-activation value.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Identity,
    Softmax,
}

impl Head {
    pub fn name(self) -> &'static str {
        match self {
            Head::Identity => "identity",
            Head::Softmax => "softmax",
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Flat model parameters, the unit that FedAvg averages.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Gradient of a scalar loss with respect to every network parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    grads: Vec<f64>,
}

impl GradientTape {
    pub fn zeros(len: usize) -> Self {
        Self {
            grads: vec![0.0; len],
        }
    }

    pub fn from_vec(grads: Vec<f64>) -> Self {
        Self { grads }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.grads
    }

    pub fn scale(&mut self, factor: f64) {
        self.grads.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn add_assign(&mut self, other: &GradientTape) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Dimension {
                context: "gradient accumulation",
                expected: self.len(),
                actual: other.len(),
            });
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            *a += b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.is_finite())
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseNet {
    dims: Vec<usize>,
    hidden: Activation,
    head: Head,
    params: Vec<f64>,
    cache: Option<ForwardCache>,
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.hidden == other.hidden
            && self.head == other.head
            && self.params == other.params
    }
}

fn param_count_for(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl DenseNet {
    /// All-zero network. Useful as a template and in tests.
    pub fn zeros(dims: &[usize], hidden: Activation, head: Head) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!(
                "layer dims must list at least two positive sizes, got {dims:?}"
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            hidden,
            head,
            params: vec![0.0; param_count_for(dims)],
            cache: None,
        })
    }

    /// Glorot-uniform weights and zero biases, reproducible from `seed`.
    pub fn seeded(dims: &[usize], hidden: Activation, head: Head, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(dims, hidden, head)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// Multiplies the last layer's weights by `factor`; a small factor makes a
    /// softmax head start close to uniform.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let last = self.dims.len() - 2;
        let (offset, n_in, n_out) = self.layer_span(last);
        for p in &mut self.params[offset..offset + n_in * n_out] {
            *p *= factor;
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("dims has at least two entries")
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        self.cache = None;
        &mut self.params
    }

    pub fn flatten(&self) -> ParamVector {
        ParamVector(self.params.clone())
    }

    pub fn unflatten(&mut self, params: &ParamVector) -> Result<()> {
        self.set_params(params.as_slice())
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension {
                context: "parameter vector",
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        self.cache = None;
        Ok(())
    }

    /// Multiply-accumulate operations of one forward pass, biases excluded.
    pub fn macs_count(&self) -> u64 {
        self.dims.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
    }

    fn layer_span(&self, layer: usize) -> (usize, usize, usize) {
        let offset = param_count_for(&self.dims[..=layer]);
        (offset, self.dims[layer], self.dims[layer + 1])
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.dims[0] {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.dims[0],
                actual: input.len(),
            });
        }
        Ok(())
    }

    fn run(&self, input: &[f64], mut keep: Option<&mut Vec<Vec<f64>>>) -> Vec<f64> {
        let layers = self.dims.len() - 1;
        let mut current = input.to_vec();
        for layer in 0..layers {
            let (offset, n_in, n_out) = self.layer_span(layer);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let mut next: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(biases)
                .map(|(row, b)| row.iter().zip(&current).map(|(w, x)| w * x).sum::<f64>() + b)
                .collect();
            if layer + 1 < layers {
                next.iter_mut().for_each(|z| *z = self.hidden.apply(*z));
            }
            if let Some(store) = keep.as_deref_mut() {
                store.push(std::mem::replace(&mut current, next));
            } else {
                current = next;
            }
        }
        match self.head {
            Head::Identity => current,
            Head::Softmax => softmax(&current),
        }
    }

    /// Forward pass without touching the cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.run(input, None))
    }

    /// Forward pass that caches intermediate activations for [`backward`](Self::backward).
    pub fn forward(&mut self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.dims.len() - 1);
        let output = self.run(input, Some(&mut inputs));
        self.cache = Some(ForwardCache {
            inputs,
            output: output.clone(),
        });
        Ok(output)
    }

    /// Gradient of the loss with respect to all parameters, given the
    /// gradient at the network output (after the head).
    pub fn backward(&self, upstream: &[f64]) -> Result<GradientTape> {
        let mut tape = GradientTape::zeros(self.params.len());
        self.accumulate_backward(upstream, &mut tape)?;
        Ok(tape)
    }

    pub fn accumulate_backward(&self, upstream: &[f64], tape: &mut GradientTape) -> Result<()> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::Dimension {
                context: "upstream gradient",
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        let logit_grad = match self.head {
            Head::Identity => upstream.to_vec(),
            Head::Softmax => {
                let p = &cache.output;
                let dot: f64 = p.iter().zip(upstream).map(|(p, g)| p * g).sum();
                p.iter().zip(upstream).map(|(p, g)| p * (g - dot)).collect()
            }
        };
        self.accumulate_backward_logits(&logit_grad, tape)
    }

    /// Like [`backward`](Self::backward) but takes the gradient with respect
    /// to the pre-head logits. For softmax + cross-entropy this is simply
    /// `p - onehot`.
    pub fn backward_logits(&self, logit_grad: &[f64]) -> Result<GradientTape> {
        let mut tape = GradientTape::zeros(self.params.len());
        self.accumulate_backward_logits(logit_grad, &mut tape)?;
        Ok(tape)
    }

    pub fn accumulate_backward_logits(
        &self,
        logit_grad: &[f64],
        tape: &mut GradientTape,
    ) -> Result<()> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        if logit_grad.len() != self.output_dim() {
            return Err(Error::Dimension {
                context: "logit gradient",
                expected: self.output_dim(),
                actual: logit_grad.len(),
            });
        }
        if tape.len() != self.params.len() {
            return Err(Error::Dimension {
                context: "gradient tape",
                expected: self.params.len(),
                actual: tape.len(),
            });
        }
        let mut delta = logit_grad.to_vec();
        for layer in (0..self.dims.len() - 1).rev() {
            let (offset, n_in, n_out) = self.layer_span(layer);
            let input = &cache.inputs[layer];
            let (w_grad, rest) = tape.grads[offset..].split_at_mut(n_in * n_out);
            for ((row, d), bg) in w_grad.chunks_exact_mut(n_in).zip(&delta).zip(rest.iter_mut()) {
                *bg += d;
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if layer > 0 {
                let weights = &self.params[offset..offset + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (row, d) in weights.chunks_exact(n_in).zip(&delta) {
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= self.hidden.derivative_from_output(*a);
                }
                delta = prev;
            }
        }
        Ok(())
    }
}
