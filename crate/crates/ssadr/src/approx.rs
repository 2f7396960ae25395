//! Trainable function approximators with analytic gradients.
//!
//! A small fully-connected net with ReLU hidden layers and a configurable
//! output head, stored as one flat parameter vector so optimizers and
//! checkpoints can treat every learned object (actors, critics, stopping
//! policy, discriminator) uniformly. Gradients are exact backpropagation;
//! the test suite cross-checks them against central finite differences.

use crate::error::{Error, Result};
use rand::Rng;

/// Output head applied after the last linear layer. Hidden layers are
/// always rectified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Raw linear output (critics).
    Identity,
    /// Squashing head in (-1, 1) (actors).
    Tanh,
    /// Sigmoidal head in (0, 1) (stopping policy, discriminator).
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activated output y = f(z).
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Total parameter count for a layer stack: Σ (fan_in + 1) · fan_out.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Fully-connected network; parameters live in one flat vector, laid out
/// per layer as the weight matrix (row-major, one row per output neuron)
/// followed by the bias vector.
#[derive(Debug, Clone)]
pub struct Approximator {
    layer_sizes: Vec<usize>,
    head: Activation,
    params: Vec<f64>,
}

impl Approximator {
    /// Fresh network with weights and biases drawn uniformly from ±1/√fan_in.
    pub fn new(layer_sizes: &[usize], head: Activation, rng: &mut impl Rng) -> Self {
        assert!(
            layer_sizes.len() >= 2 && layer_sizes.iter().all(|&s| s > 0),
            "need at least input and output layer sizes, all positive"
        );
        let mut params = Vec::with_capacity(param_count(layer_sizes));
        for w in layer_sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] + 1) * w[1] {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Self {
            layer_sizes: layer_sizes.to_vec(),
            head,
            params,
        }
    }

    /// All-zero parameters (fixtures and tests).
    pub fn zeros(layer_sizes: &[usize], head: Activation) -> Self {
        Self {
            layer_sizes: layer_sizes.to_vec(),
            head,
            params: vec![0.0; param_count(layer_sizes)],
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn head(&self) -> Activation {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Usage(format!(
                "parameter vector length {} does not match network ({})",
                params.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Usage(format!(
                "input length {} does not match network input size {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Deterministic forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut act = x.to_vec();
        let mut offset = 0;
        let n_layers = self.layer_sizes.len() - 1;
        for l in 0..n_layers {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let biases = &self.params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            let mut next = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let mut z = biases[o];
                for (w, a) in row.iter().zip(&act) {
                    z += w * a;
                }
                next.push(if l + 1 == n_layers {
                    self.head.apply(z)
                } else {
                    z.max(0.0)
                });
            }
            act = next;
            offset += (fan_in + 1) * fan_out;
        }
        Ok(act)
    }

    /// Forward pass for single-output networks.
    pub fn forward_scalar(&self, x: &[f64]) -> Result<f64> {
        let out = self.forward(x)?;
        if out.len() != 1 {
            return Err(Error::Usage(format!(
                "forward_scalar on a network with {} outputs",
                out.len()
            )));
        }
        Ok(out[0])
    }

    /// Gradient of upstream·forward(x) with respect to the flat parameters.
    pub fn gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        Ok(self.backward(x, upstream)?.0)
    }

    /// Same as [`gradient`](Self::gradient) but also returns the gradient
    /// with respect to the input vector (needed to differentiate a critic
    /// through its action input).
    pub fn gradient_with_input(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.backward(x, upstream)
    }

    fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::Usage(format!(
                "upstream length {} does not match network output size {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let n_layers = self.layer_sizes.len() - 1;

        // Forward, keeping every activation.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        let mut offsets = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            offsets.push(offset);
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let biases = &self.params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            let prev = &acts[l];
            let mut next = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let mut z = biases[o];
                for (w, a) in row.iter().zip(prev) {
                    z += w * a;
                }
                next.push(if l + 1 == n_layers {
                    self.head.apply(z)
                } else {
                    z.max(0.0)
                });
            }
            acts.push(next);
            offset += (fan_in + 1) * fan_out;
        }

        // Backward.
        let mut grad = vec![0.0; self.params.len()];
        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(acts[n_layers].iter())
            .map(|(&u, &y)| u * self.head.derivative_from_output(y))
            .collect();
        for l in (0..n_layers).rev() {
            let fan_in = self.layer_sizes[l];
            let fan_out = self.layer_sizes[l + 1];
            let offset = offsets[l];
            let prev = &acts[l];
            {
                let (w_grad, b_grad) =
                    grad[offset..offset + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let d = delta[o];
                    let row = &mut w_grad[o * fan_in..(o + 1) * fan_in];
                    for (g, a) in row.iter_mut().zip(prev) {
                        *g += d * a;
                    }
                    b_grad[o] += d;
                }
            }
            // Propagate to the previous layer (or the input).
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let mut prev_delta = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                for (pd, w) in prev_delta.iter_mut().zip(row) {
                    *pd += d * w;
                }
            }
            if l > 0 {
                // ReLU gate: the stored activation is max(0, z).
                for (pd, &a) in prev_delta.iter_mut().zip(&acts[l]) {
                    if a <= 0.0 {
                        *pd = 0.0;
                    }
                }
            }
            delta = prev_delta;
        }
        Ok((grad, delta))
    }

    /// Serialize to a versioned JSON blob. f64 values survive the round
    /// trip bit-exactly.
    pub fn to_blob(&self) -> String {
        serde_json::to_string(&NetBlob {
            version: BLOB_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            activation: self.head,
            params: self.params.clone(),
        })
        .expect("network blob serializes")
    }

    pub fn from_blob(blob: &str) -> Result<Self> {
        let blob: NetBlob = serde_json::from_str(blob)
            .map_err(|e| Error::Checkpoint(format!("bad network blob: {e}")))?;
        if blob.version != BLOB_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported network blob version {} (expected {BLOB_VERSION})",
                blob.version
            )));
        }
        if blob.layer_sizes.len() < 2 || blob.params.len() != param_count(&blob.layer_sizes) {
            return Err(Error::Checkpoint(format!(
                "blob parameter count {} does not match layer sizes {:?}",
                blob.params.len(),
                blob.layer_sizes
            )));
        }
        Ok(Self {
            layer_sizes: blob.layer_sizes,
            head: blob.activation,
            params: blob.params,
        })
    }
}

const BLOB_VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct NetBlob {
    version: u32,
    layer_sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected update applied in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grad.len() != params.len() {
            return Err(Error::Usage(format!(
                "adam step on {} params with {} gradient entries (state holds {})",
                params.len(),
                grad.len(),
                self.first_moment.len()
            )));
        }
        if let Some(idx) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient component {} at index {idx} (step {})",
                grad[idx],
                self.step_count + 1
            )));
        }
        self.step_count += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for i in 0..params.len() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * grad[i];
            *v = self.beta2 * *v + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
