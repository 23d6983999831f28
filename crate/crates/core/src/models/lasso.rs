//! L1-penalized least squares by cyclic coordinate descent.
//!
//! Minimizes `(1/(2n)) * ||y - Xw - b||^2 + alpha * ||w||_1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    pub alpha: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            alpha: 0.001,
            tol: 1e-6,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LassoModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }
}

/// Fit result plus per-sweep diagnostics.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub model: LassoModel,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep.
    pub objective: Vec<f64>,
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn objective(x: &[Vec<f64>], y: &[f64], m: &LassoModel, alpha: f64) -> f64 {
    let n = y.len() as f64;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(r, yi)| (yi - m.predict_row(r)).powi(2))
        .sum();
    rss / (2.0 * n) + alpha * m.weights.iter().map(|w| w.abs()).sum::<f64>()
}

pub fn fit_lasso(x: &[Vec<f64>], y: &[f64], params: &LassoParams) -> Result<LassoFit> {
    let n = y.len();
    if n < 2 || x.len() != n {
        return Err(Error::data("lasso needs at least two aligned samples"));
    }
    if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::data("lasso input contains non-finite values"));
    }
    if !(params.alpha >= 0.0) {
        return Err(Error::config("lasso alpha must be >= 0"));
    }
    let p = x[0].len();
    let nf = n as f64;
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.iter().map(|r| r[j]).collect()).collect();
    let sq: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf)
        .collect();

    let mut w = vec![0.0; p];
    let mut b = 0.0;
    // residual = y - Xw - b
    let mut resid: Vec<f64> = y.to_vec();
    let mut history = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < params.max_sweeps {
        sweeps += 1;
        let shift = resid.iter().sum::<f64>() / nf;
        b += shift;
        resid.iter_mut().for_each(|r| *r -= shift);

        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if sq[j] == 0.0 {
                continue;
            }
            let col = &cols[j];
            let rho = col
                .iter()
                .zip(&resid)
                .map(|(xi, ri)| xi * (ri + xi * w[j]))
                .sum::<f64>()
                / nf;
            let new = soft_threshold(rho, params.alpha) / sq[j];
            let delta = new - w[j];
            if delta != 0.0 {
                resid.iter_mut().zip(col).for_each(|(r, xi)| *r -= xi * delta);
                w[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        let model = LassoModel {
            weights: w.clone(),
            intercept: b,
        };
        history.push(objective(x, y, &model, params.alpha));
        if max_delta < params.tol {
            converged = true;
            break;
        }
    }
    // Final intercept refresh so b is exact for the returned weights.
    let shift = resid.iter().sum::<f64>() / nf;
    b += shift;
    if !converged {
        log::warn!("lasso stopped after {sweeps} sweeps without converging");
    }
    Ok(LassoFit {
        model: LassoModel {
            weights: w,
            intercept: b,
        },
        sweeps,
        converged,
        objective: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let a = (i as f64 * 0.7).sin();
                let b = (i as f64 * 1.3).cos();
                vec![a, b]
            })
            .collect();
        let y = x.iter().map(|r| 2.0 * r[0] - 1.5 * r[1] + 3.0).collect();
        (x, y)
    }

    #[test]
    fn zero_alpha_recovers_least_squares() {
        let (x, y) = linear_data();
        let fit = fit_lasso(
            &x,
            &y,
            &LassoParams {
                alpha: 0.0,
                tol: 1e-12,
                max_sweeps: 100_000,
            },
        )
        .unwrap();
        assert!((fit.model.weights[0] - 2.0).abs() < 1e-6);
        assert!((fit.model.weights[1] + 1.5).abs() < 1e-6);
        assert!((fit.model.intercept - 3.0).abs() < 1e-6);
    }

    #[test]
    fn large_alpha_shrinks_everything() {
        let (x, y) = linear_data();
        let fit = fit_lasso(
            &x,
            &y,
            &LassoParams {
                alpha: 1e6,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(fit.model.weights.iter().all(|w| *w == 0.0));
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((fit.model.intercept - mean).abs() < 1e-12);
    }

    #[test]
    fn objective_never_increases() {
        let (x, mut y) = linear_data();
        y.iter_mut().enumerate().for_each(|(i, v)| *v += ((i * 7) % 5) as f64 * 0.1);
        let fit = fit_lasso(
            &x,
            &y,
            &LassoParams {
                alpha: 0.05,
                ..Default::default()
            },
        )
        .unwrap();
        for w in fit.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let x = vec![vec![1.0], vec![f64::NAN]];
        assert!(fit_lasso(&x, &[1.0, 2.0], &LassoParams::default()).is_err());
    }
}
