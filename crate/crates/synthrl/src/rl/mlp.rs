//! Small fully-connected network with rectified hidden layers and a linear
//! scalar output, trained by Adam on squared error. Everything is f64 and
//! explicit so the loss gradient can be checked against finite differences.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>, // row-major: out x in
    pub biases: Vec<f64>,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Adam state paired with a network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Mlp {
    /// `dims` lists layer widths including input and output, e.g.
    /// `[6, 128, 128, 1]`.
    pub fn new(dims: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
        assert!(dims.len() >= 2, "need at least input and output widths");
        assert_eq!(*dims.last().unwrap(), 1, "scalar output expected");
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            let scale = (1.0 / inputs as f64).sqrt();
            let weights = (0..inputs * outputs)
                .map(|_| rng.gen_range(-scale..scale))
                .collect();
            let biases = vec![0.0; outputs];
            layers.push(Layer {
                weights,
                biases,
                inputs,
                outputs,
            });
        }
        Mlp { layers }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
    }

    pub fn forward(&self, input: &[f64]) -> f64 {
        let mut act = input.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.outputs];
            for o in 0..layer.outputs {
                let mut sum = layer.biases[o];
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, a) in row.iter().zip(&act) {
                    sum += w * a;
                }
                let last = li + 1 == self.layers.len();
                next[o] = if last { sum } else { sum.max(0.0) };
            }
            act = next;
        }
        act[0]
    }

    /// Mean squared error over a batch of (input, target) pairs.
    pub fn loss(&self, batch: &[(Vec<f64>, f64)]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        batch
            .iter()
            .map(|(x, y)| {
                let d = self.forward(x) - y;
                d * d
            })
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Gradient of [`Mlp::loss`] with respect to every parameter, flattened
    /// in the same order as [`Mlp::params`].
    pub fn loss_gradient(&self, batch: &[(Vec<f64>, f64)]) -> Vec<f64> {
        let mut grad = vec![0.0; self.num_params()];
        if batch.is_empty() {
            return grad;
        }
        let scale = 2.0 / batch.len() as f64;
        for (x, y) in batch {
            // forward pass keeping activations
            let mut acts: Vec<Vec<f64>> = vec![x.clone()];
            let mut pre: Vec<Vec<f64>> = Vec::new();
            for (li, layer) in self.layers.iter().enumerate() {
                let prev = acts.last().unwrap();
                let mut z = vec![0.0; layer.outputs];
                for o in 0..layer.outputs {
                    let mut sum = layer.biases[o];
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, a) in row.iter().zip(prev) {
                        sum += w * a;
                    }
                    z[o] = sum;
                }
                pre.push(z.clone());
                let last = li + 1 == self.layers.len();
                acts.push(if last {
                    z
                } else {
                    z.into_iter().map(|v| v.max(0.0)).collect()
                });
            }
            let out = acts.last().unwrap()[0];
            // backward pass
            let mut delta = vec![scale * (out - y)];
            let mut offset = self.num_params();
            for (li, layer) in self.layers.iter().enumerate().rev() {
                offset -= layer.weights.len() + layer.biases.len();
                let prev = &acts[li];
                for o in 0..layer.outputs {
                    grad[offset + layer.weights.len() + o] += delta[o];
                    for i in 0..layer.inputs {
                        grad[offset + o * layer.inputs + i] += delta[o] * prev[i];
                    }
                }
                if li > 0 {
                    let mut next_delta = vec![0.0; layer.inputs];
                    for i in 0..layer.inputs {
                        let mut sum = 0.0;
                        for o in 0..layer.outputs {
                            sum += layer.weights[o * layer.inputs + i] * delta[o];
                        }
                        // derivative of the rectifier at the previous layer
                        if pre[li - 1][i] > 0.0 {
                            next_delta[i] = sum;
                        }
                    }
                    delta = next_delta;
                }
            }
        }
        grad
    }
}

impl Adam {
    pub fn new(net: &Mlp, learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; net.num_params()],
            v: vec![0.0; net.num_params()],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grad: &[f64]) {
        self.t += 1;
        let mut params = net.params();
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
        net.set_params(&params);
    }
}

impl Mlp {
    /// Which rectifier units fire for each batch input, flattened; used to
    /// detect kink crossings during finite-difference checks.
    fn activation_pattern(&self, batch: &[(Vec<f64>, f64)]) -> Vec<bool> {
        let mut pattern = Vec::new();
        for (x, _) in batch {
            let mut act = x.clone();
            for (li, layer) in self.layers.iter().enumerate() {
                let mut next = vec![0.0; layer.outputs];
                for o in 0..layer.outputs {
                    let mut sum = layer.biases[o];
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, a) in row.iter().zip(&act) {
                        sum += w * a;
                    }
                    let last = li + 1 == self.layers.len();
                    if !last {
                        pattern.push(sum > 0.0);
                        next[o] = sum.max(0.0);
                    } else {
                        next[o] = sum;
                    }
                }
                act = next;
            }
        }
        pattern
    }
}

/// Relative error between the analytic loss gradient and central finite
/// differences. Coordinates whose perturbation flips a rectifier unit are
/// skipped: the loss is not differentiable across such a kink and central
/// differences do not apply there.
pub fn gradient_check(net: &Mlp, batch: &[(Vec<f64>, f64)], h: f64) -> f64 {
    let analytic = net.loss_gradient(batch);
    let params = net.params();
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus[i] += h;
        probe.set_params(&plus);
        let lp = probe.loss(batch);
        let pattern_plus = probe.activation_pattern(batch);
        let mut minus = params.clone();
        minus[i] -= h;
        probe.set_params(&minus);
        let lm = probe.loss(batch);
        if probe.activation_pattern(batch) != pattern_plus {
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1.0);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}
