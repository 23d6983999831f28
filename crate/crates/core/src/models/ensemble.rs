//! Tree ensembles: bagged random forest and least-squares gradient boosting.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{to_columns, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    /// Per-split feature subset size; `None` uses `ceil(sqrt(p))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 49,
            min_samples_leaf: 11,
            min_samples_split: 27,
            bootstrap: true,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &ForestParams, seed: u64) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::data("forest needs non-empty aligned data"));
        }
        if params.n_trees == 0 {
            return Err(Error::config("forest needs at least one tree"));
        }
        let cols = to_columns(x);
        let p = cols.len();
        let n = y.len();
        let k = params
            .max_features
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
            .clamp(1, p.max(1));
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            min_samples_split: params.min_samples_split,
            max_features: Some(k),
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_from(seed, t as u64);
                let idx = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit_indices(&cols, y, idx, &tree_params, Some(&mut rng))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Forest { trees })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for GbrtParams {
    fn default() -> Self {
        GbrtParams {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: 23,
            min_samples_leaf: 17,
            min_samples_split: 59,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbrt {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    /// Training MSE after each stage; entry 0 is the constant model.
    pub train_mse: Vec<f64>,
}

impl Gbrt {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &GbrtParams) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::data("boosting needs non-empty aligned data"));
        }
        if !(params.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        let n = y.len();
        let cols = to_columns(x);
        let base = y.iter().sum::<f64>() / n as f64;
        let mut f = vec![base; n];
        let mse = |f: &[f64]| f.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum::<f64>() / n as f64;
        let mut train_mse = vec![mse(&f)];
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            min_samples_split: params.min_samples_split,
            max_features: None,
        };
        let mut trees = Vec::with_capacity(params.n_stages);
        for _ in 0..params.n_stages {
            let resid: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a - b).collect();
            let tree = RegressionTree::fit_indices(&cols, &resid, (0..n).collect(), &tree_params, None)?;
            for (i, fi) in f.iter_mut().enumerate() {
                *fi += params.learning_rate * tree.predict_row(&x[i]);
            }
            train_mse.push(mse(&f));
            trees.push(tree);
        }
        Ok(Gbrt {
            base,
            learning_rate: params.learning_rate,
            trees,
            train_mse,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base
            + self.learning_rate * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y = x
            .iter()
            .map(|r| 3.0 + r[0].signum() + 0.5 * r[1] * r[2] + rng.random_range(-0.2..0.2))
            .collect();
        (x, y)
    }

    #[test]
    fn degenerate_forest_equals_tree() {
        let (x, y) = data(200, 1);
        let fp = ForestParams {
            n_trees: 1,
            bootstrap: false,
            max_features: Some(4),
            max_depth: 6,
            min_samples_leaf: 3,
            min_samples_split: 6,
        };
        let forest = Forest::fit(&x, &y, &fp, 9).unwrap();
        let tree = RegressionTree::fit(
            &x,
            &y,
            &TreeParams {
                max_depth: 6,
                min_samples_leaf: 3,
                min_samples_split: 6,
                max_features: None,
            },
        )
        .unwrap();
        for r in &x {
            assert_eq!(forest.predict_row(r), tree.predict_row(r));
        }
    }

    #[test]
    fn forest_predicts_mean_of_trees_and_is_deterministic() {
        let (x, y) = data(150, 2);
        let fp = ForestParams {
            n_trees: 12,
            ..Default::default()
        };
        let a = Forest::fit(&x, &y, &fp, 5).unwrap();
        let b = Forest::fit(&x, &y, &fp, 5).unwrap();
        assert_eq!(a, b);
        let (probe, _) = data(10, 3);
        for r in &probe {
            let mean = a.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / 12.0;
            assert!((a.predict_row(r) - mean).abs() < 1e-12);
        }
        let c = Forest::fit(&x, &y, &fp, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_stages_predict_mean() {
        let (x, y) = data(50, 4);
        let g = Gbrt::fit(&x, &y, &GbrtParams { n_stages: 0, ..Default::default() }).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        for r in &x {
            assert_eq!(g.predict_row(r), mean);
        }
    }

    #[test]
    fn training_mse_never_increases() {
        let (x, y) = data(300, 5);
        let g = Gbrt::fit(
            &x,
            &y,
            &GbrtParams {
                n_stages: 40,
                min_samples_leaf: 5,
                min_samples_split: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(g.train_mse.len(), 41);
        for w in g.train_mse.windows(2) {
            assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
        }
        assert!(g.train_mse[40] < 0.5 * g.train_mse[0]);
    }
}
