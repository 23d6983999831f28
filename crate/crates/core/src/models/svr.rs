//! Epsilon-insensitive support vector regression with an RBF kernel.
//!
//! The dual is solved in the standard 2n-variable form
//!
//! ```text
//! min_b  1/2 b'Qb + p'b   s.t.  s'b = 0,  0 <= b <= C
//! ```
//!
//! with `b = [alpha; alpha*]`, `s = [+1..; -1..]`, `Q_uv = s_u s_v K(u, v)`
//! and `p = [eps - y; eps + y]`, by sequential minimal optimization with
//! second-order working-set selection.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;
const CACHE_BYTES: usize = 512 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// KKT violation tolerance.
    pub tol: f64,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 2.0,
            gamma: 0.024,
            epsilon: 0.1,
            tol: 1e-3,
        }
    }
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub gamma: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i - alpha*_i` for each support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl SvrModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.bias
            + self
                .support_vectors
                .iter()
                .zip(&self.coefficients)
                .map(|(sv, c)| c * rbf(sv, row, self.gamma))
                .sum::<f64>()
    }

    pub fn n_support(&self) -> usize {
        self.coefficients.len()
    }
}

#[derive(Debug, Clone)]
pub struct SvrFit {
    pub model: SvrModel,
    pub iterations: usize,
    /// Dual objective (to be maximized) sampled once per pass of `n`
    /// iterations, plus the final value.
    pub dual_objective: Vec<f64>,
    pub converged: bool,
}

/// Kernel rows on demand, with a bounded FIFO cache.
struct KernelRows<'a> {
    x: &'a [Vec<f64>],
    gamma: f64,
    cache: HashMap<usize, Vec<f64>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [Vec<f64>], gamma: f64) -> Self {
        let n = x.len().max(1);
        KernelRows {
            x,
            gamma,
            cache: HashMap::new(),
            order: VecDeque::new(),
            capacity: (CACHE_BYTES / (n * 8)).max(2),
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if !self.cache.contains_key(&i) {
            if self.cache.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.cache.remove(&old);
                }
            }
            let xi = &self.x[i];
            let row = self.x.iter().map(|xj| rbf(xi, xj, self.gamma)).collect();
            self.cache.insert(i, row);
            self.order.push_back(i);
        }
        &self.cache[&i]
    }
}

pub fn fit_svr(x: &[Vec<f64>], y: &[f64], params: &SvrParams) -> Result<SvrFit> {
    let n = y.len();
    if n == 0 || x.len() != n {
        return Err(Error::data("svr needs non-empty aligned data"));
    }
    if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::data("svr input contains non-finite values"));
    }
    if !(params.c > 0.0 && params.gamma > 0.0 && params.epsilon >= 0.0 && params.tol > 0.0) {
        return Err(Error::config("svr needs C > 0, gamma > 0, epsilon >= 0, tol > 0"));
    }
    let l = 2 * n;
    let c = params.c;
    let sign = |u: usize| if u < n { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..l)
        .map(|u| {
            if u < n {
                params.epsilon - y[u]
            } else {
                params.epsilon + y[u - n]
            }
        })
        .collect();
    let mut beta = vec![0.0; l];
    let mut grad = p.clone();
    let mut kernel = KernelRows::new(x, params.gamma);
    let diag = 1.0; // K(x, x) for the RBF kernel

    let objective = |beta: &[f64], grad: &[f64]| -> f64 {
        // f = 1/2 b'Qb + p'b = 1/2 sum b_u (G_u + p_u)
        -0.5 * beta
            .iter()
            .zip(grad.iter().zip(&p))
            .map(|(b, (g, pu))| b * (g + pu))
            .sum::<f64>()
    };
    let is_upper = |b: f64| b >= c;
    let is_lower = |b: f64| b <= 0.0;

    let max_iter = (100 * l).max(10_000_000);
    let mut history = vec![objective(&beta, &grad)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // Working set: i maximizes -s_t G_t over I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            let in_up = if sign(t) > 0.0 { !is_upper(beta[t]) } else { !is_lower(beta[t]) };
            if in_up && -sign(t) * grad[t] >= gmax {
                gmax = -sign(t) * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best_obj = f64::INFINITY;
        if i != usize::MAX {
            let ki: Vec<f64> = kernel.row(i % n).to_vec();
            for t in 0..l {
                let in_low = if sign(t) > 0.0 { !is_lower(beta[t]) } else { !is_upper(beta[t]) };
                if !in_low {
                    continue;
                }
                let v = -sign(t) * grad[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    // a = Q_ii + Q_tt - 2 s_i s_t Q_it = 2 - 2 K_it
                    let a = (diag + diag - 2.0 * ki[t % n]).max(TAU);
                    let obj = -(b * b) / a;
                    if obj <= best_obj {
                        best_obj = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let ki: Vec<f64> = kernel.row(i % n).to_vec();
        let kj: Vec<f64> = kernel.row(j % n).to_vec();
        let q = |row: &[f64], u: usize, v: usize| sign(u) * sign(v) * row[v % n];
        let qij = q(&ki, i, j);
        let (old_i, old_j) = (beta[i], beta[j]);
        if sign(i) != sign(j) {
            let quad = (diag + diag + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let quad = (diag + diag - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }
        let (di, dj) = (beta[i] - old_i, beta[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(&ki, i, t) * di + q(&kj, j, t) * dj;
        }
        if iterations % n == 0 {
            history.push(objective(&beta, &grad));
        }
    }
    history.push(objective(&beta, &grad));
    if !converged {
        log::warn!("svr solver hit the iteration cap ({max_iter}) before reaching tolerance");
    }

    // Bias from free variables, else the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut n_free) = (0.0, 0usize);
    for t in 0..l {
        let yg = sign(t) * grad[t];
        if is_upper(beta[t]) {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(beta[t]) {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 { free_sum / n_free as f64 } else { (ub + lb) / 2.0 };

    let mut support_vectors = Vec::new();
    let mut coefficients = Vec::new();
    for i in 0..n {
        let coef = beta[i] - beta[i + n];
        if coef != 0.0 {
            support_vectors.push(x[i].clone());
            coefficients.push(coef);
        }
    }
    Ok(SvrFit {
        model: SvrModel {
            gamma: params.gamma,
            support_vectors,
            coefficients,
            bias: -rho,
        },
        iterations,
        dual_objective: history,
        converged,
    })
}
