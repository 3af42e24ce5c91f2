//! A small fully-connected value network with rectified-linear hidden layers
//! and an identity output, plus manual backpropagation. Kept dependency-free
//! so every gradient can be checked against finite differences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major (out x in).
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { weights: vec![0.0; in_dim * out_dim], biases: vec![0.0; out_dim], in_dim, out_dim }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub layers: Vec<Layer>,
}

/// Parameter gradients, shape-matched to a network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &QNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }
}

/// Forward-pass scratch: pre- and post-activation values per layer.
pub struct ForwardTrace {
    /// inputs[0] is the network input; inputs[k+1] the activation after
    /// layer k.
    pub activations: Vec<Vec<f64>>,
}

impl QNetwork {
    /// He-style uniform initialization, deterministic given the rng.
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter("need at least input and output dims".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (in_dim, out_dim) = (w[0], w[1]);
            let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| rng.gen_range(-limit..limit))
                .collect();
            layers.push(Layer { weights, biases: vec![0.0; out_dim], in_dim, out_dim });
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Plain forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.activations.pop().unwrap())
    }

    /// Forward pass that keeps all intermediate activations for backprop.
    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let x = activations.last().unwrap();
            let mut out = vec![0.0; layer.out_dim];
            for i in 0..layer.out_dim {
                let row = &layer.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                let mut acc = layer.biases[i];
                for (w, xv) in row.iter().zip(x.iter()) {
                    acc += w * xv;
                }
                // Hidden layers rectify; output layer is identity.
                out[i] = if k < last { acc.max(0.0) } else { acc };
            }
            activations.push(out);
        }
        Ok(ForwardTrace { activations })
    }

    /// Backpropagates d(loss)/d(output) through the trace, accumulating
    /// parameter gradients into `grads`.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &[f64], grads: &mut Gradients) {
        let mut delta = output_grad.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.activations[k];
            let out = &trace.activations[k + 1];
            let is_hidden = k < self.layers.len() - 1;
            // ReLU gate: a dead unit passes no gradient. (Subgradient 0
            // at exactly 0.)
            if is_hidden {
                for (d, &o) in delta.iter_mut().zip(out.iter()) {
                    if o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let g = &mut grads.layers[k];
            let mut next_delta = vec![0.0; layer.in_dim];
            for i in 0..layer.out_dim {
                let di = delta[i];
                if di == 0.0 {
                    continue;
                }
                g.biases[i] += di;
                let row = &layer.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                let grow = &mut g.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                for j in 0..layer.in_dim {
                    grow[j] += di * x[j];
                    next_delta[j] += di * row[j];
                }
            }
            delta = next_delta;
        }
    }

    /// Plain gradient descent: theta <- theta - lr * grad.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: self.layers.len(),
                got: grads.layers.len(),
            });
        }
        for (layer, g) in self.layers.iter_mut().zip(grads.layers.iter()) {
            if g.weights.len() != layer.weights.len() || g.biases.len() != layer.biases.len() {
                return Err(Error::DimensionMismatch {
                    expected: layer.weights.len(),
                    got: g.weights.len(),
                });
            }
            for (w, gw) in layer.weights.iter_mut().zip(g.weights.iter()) {
                *w -= learning_rate * gw;
            }
            for (b, gb) in layer.biases.iter_mut().zip(g.biases.iter()) {
                *b -= learning_rate * gb;
            }
        }
        Ok(())
    }

    /// Flat view of all parameters; used by gradient checking.
    pub fn params_mut(&mut self) -> Vec<&mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
            .collect()
    }

    pub fn grad_values(grads: &Gradients) -> Vec<f64> {
        grads
            .layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
            .collect()
    }
}

/// Greedy argmax with ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let mut net = QNetwork::new(&[3, 4, 5], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for layer in &mut net.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let out = net.forward(&[0.3, -0.2, 0.9]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_two_layer_output() {
        // 1 input -> 1 hidden (relu) -> 1 output.
        let mut net = QNetwork::new(&[1, 1, 1], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        net.layers[0].weights = vec![2.0];
        net.layers[0].biases = vec![-1.0];
        net.layers[1].weights = vec![3.0];
        net.layers[1].biases = vec![0.5];
        // x=1: hidden = relu(2*1-1)=1, out = 3*1+0.5 = 3.5
        assert_relative_eq!(net.forward(&[1.0]).unwrap()[0], 3.5);
        // x=0: hidden = relu(-1)=0, out = 0.5
        assert_relative_eq!(net.forward(&[0.0]).unwrap()[0], 0.5);
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        // Independent arithmetic path: nested Vec matrices, no shared code.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = QNetwork::new(&[3, 8, 5], &mut rng).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut cur = x.clone();
        for (k, layer) in net.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.out_dim);
            for i in 0..layer.out_dim {
                let mut acc = layer.biases[i];
                for j in 0..layer.in_dim {
                    acc += layer.weights[i * layer.in_dim + j] * cur[j];
                }
                if k < net.layers.len() - 1 {
                    acc = if acc > 0.0 { acc } else { 0.0 };
                }
                next.push(acc);
            }
            cur = next;
        }

        let fast = net.forward(&x).unwrap();
        for (a, b) in fast.iter().zip(cur.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = QNetwork::new(&[3, 4, 2], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn sgd_step_examples() {
        let mut net = QNetwork::new(&[1, 2], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let before = net.clone();
        let mut grads = Gradients::zeros_like(&net);
        net.sgd_step(&grads, 1e-3).unwrap();
        assert_eq!(net, before);

        grads.layers[0].weights[0] = 2.0;
        net.sgd_step(&grads, 1e-3).unwrap();
        assert_relative_eq!(net.layers[0].weights[0], before.layers[0].weights[0] - 0.002);
    }

    #[test]
    fn argmax_ties_to_lowest_index() {
        assert_eq!(argmax(&[0.0, 1.0, 1.0, 0.5]), 1);
        assert_eq!(argmax(&[3.0]), 0);
        let mut v = vec![0.0; 10];
        v[4] = 2.0;
        v[9] = 2.0;
        assert_eq!(argmax(&v), 4);
    }
}
