//! Fully connected ReLU network trained with mini-batch SGD and momentum.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Samples per gradient chunk; chunks are summed in a fixed order.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    FanIn,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_layers: usize,
    pub hidden_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub init: Init,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden_layers: 3,
            hidden_size: 100,
            batch_size: 128,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 200,
            init: Init::FanIn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let w = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            b + w.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// `bias_out` seeds the output unit's bias.
    pub fn new(n_features: usize, params: &MlpParams, bias_out: f64, seed: u64) -> Self {
        let mut rng = rng_from(seed, 0x4d4c50);
        let mut sizes = vec![n_features];
        sizes.extend(std::iter::repeat_n(params.hidden_size, params.hidden_layers));
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = (6.0 / n_in.max(1) as f64).sqrt();
                let weights = (0..n_in * n_out)
                    .map(|_| match params.init {
                        Init::FanIn => rng.random_range(-bound..bound),
                        Init::Zero => 0.0,
                    })
                    .collect();
                Layer {
                    n_in,
                    n_out,
                    weights,
                    bias: vec![0.0; n_out],
                }
            })
            .collect::<Vec<_>>();
        let mut mlp = Mlp { layers };
        mlp.layers.last_mut().expect("output layer").bias[0] = bias_out;
        mlp
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Weights then bias, layer by layer.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_params_flat(&mut self, v: &[f64]) {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&v[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&v[at..at + nb]);
            at += nb;
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut a = row.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            l.forward(&a, &mut z);
            if k < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut a, &mut z);
        }
        a[0]
    }

    /// Adds the gradient of `1/2 (f(x) - y)^2` to `grad`; returns the loss term.
    fn accumulate(&self, row: &[f64], target: f64, grad: &mut [f64]) -> f64 {
        let last = self.layers.len() - 1;
        let mut acts: Vec<Vec<f64>> = vec![row.to_vec()];
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            l.forward(acts.last().expect("input"), &mut z);
            if k < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        let err = acts[self.layers.len()][0] - target;
        let mut delta = vec![err];
        // Offsets of each layer's parameters in the flat vector.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.weights.len() + l.bias.len();
        }
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let input = &acts[k];
            let off = offsets[k];
            for o in 0..l.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let gw = &mut grad[off + o * l.n_in..off + (o + 1) * l.n_in];
                gw.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                grad[off + l.weights.len() + o] += d;
            }
            if k > 0 {
                let mut prev = vec![0.0; l.n_in];
                for (w, &d) in l.weights.chunks_exact(l.n_in).zip(&delta) {
                    if d == 0.0 {
                        continue;
                    }
                    prev.iter_mut().zip(w).for_each(|(p, wv)| *p += d * wv);
                }
                // ReLU derivative: 1 where the activation is positive.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        0.5 * err * err
    }

    /// Mean loss `1/(2B) sum (f(x) - y)^2` over the batch and its gradient.
    pub fn loss_and_grad(&self, x: &[Vec<f64>], y: &[f64], idx: &[usize]) -> (f64, Vec<f64>) {
        let np = self.n_params();
        let parts: Vec<(f64, Vec<f64>)> = idx
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; np];
                let loss = chunk.iter().map(|&i| self.accumulate(&x[i], y[i], &mut g)).sum::<f64>();
                (loss, g)
            })
            .collect();
        let b = idx.len() as f64;
        let mut grad = vec![0.0; np];
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
        }
        grad.iter_mut().for_each(|v| *v /= b);
        (loss / b, grad)
    }

    pub fn loss(&self, x: &[Vec<f64>], y: &[f64]) -> f64 {
        let n = y.len() as f64;
        x.par_iter()
            .zip(y)
            .map(|(r, t)| 0.5 * (self.predict_row(r) - t).powi(2))
            .collect::<Vec<_>>()
            .iter()
            .sum::<f64>()
            / n
    }
}

#[derive(Debug, Clone)]
pub struct MlpFit {
    pub model: Mlp,
    /// Mean training loss per epoch, preceded by the initial loss.
    pub loss_history: Vec<f64>,
}

pub fn fit_mlp(x: &[Vec<f64>], y: &[f64], params: &MlpParams, seed: u64) -> Result<MlpFit> {
    let n = y.len();
    if n == 0 || x.len() != n {
        return Err(Error::data("mlp needs non-empty aligned data"));
    }
    if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::data("mlp input contains non-finite values"));
    }
    if params.batch_size == 0 || params.hidden_size == 0 {
        return Err(Error::config("mlp batch_size and hidden_size must be positive"));
    }
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut model = Mlp::new(x[0].len(), params, mean_y, seed);
    let initial = model.loss(x, y);
    let mut history = vec![initial];
    let mut theta = model.params_flat();
    let mut velocity = vec![0.0; theta.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng_from(seed, 0x5348);
    let mut blown = 0;
    for epoch in 1..=params.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(params.batch_size) {
            let (loss, grad) = model.loss_and_grad(x, y, batch);
            epoch_loss += loss * batch.len() as f64;
            for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = params.momentum * *v - params.learning_rate * g;
                *t += *v;
            }
            model.set_params_flat(&theta);
        }
        epoch_loss /= n as f64;
        history.push(epoch_loss);
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
                initial,
            });
        }
        if epoch_loss > 10.0 * initial {
            blown += 1;
            if blown >= 5 {
                return Err(Error::Diverged {
                    epoch,
                    loss: epoch_loss,
                    initial,
                });
            }
        } else {
            blown = 0;
        }
    }
    Ok(MlpFit {
        model,
        loss_history: history,
    })
}
