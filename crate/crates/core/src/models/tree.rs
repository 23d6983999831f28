//! CART regression tree with squared-error splits.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Features drawn per split; `None` considers all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 33,
            min_samples_leaf: 31,
            min_samples_split: 23,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        /// Samples with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
        /// Reduction in sum of squared deviations.
        gain: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

/// Best split found at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Column-major copy of a row matrix.
pub fn to_columns(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = x.first().map_or(0, Vec::len);
    (0..p).map(|j| x.iter().map(|r| r[j]).collect()).collect()
}

fn sse(y: &[f64], idx: &[usize]) -> f64 {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    idx.iter().map(|&i| (y[i] - mean).powi(2)).sum()
}

/// Exhaustive search over `features` (ascending) and midpoints between
/// consecutive distinct values. Equal gains keep the earlier candidate, so
/// ties go to the lowest feature index, then the lowest threshold.
pub fn best_split(
    cols: &[Vec<f64>],
    y: &[f64],
    idx: &[usize],
    features: &[usize],
    min_samples_leaf: usize,
) -> Option<SplitChoice> {
    let n = idx.len();
    let min_leaf = min_samples_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let parent = sse(y, idx);
    let tol = 1e-12 * parent.max(f64::MIN_POSITIVE);
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let mut best: Option<SplitChoice> = None;
    let mut order = idx.to_vec();
    for &f in features {
        let x = &cols[f];
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += y[order[k]];
            let n_left = k + 1;
            let n_right = n - n_left;
            let (lo, hi) = (x[order[k]], x[order[k + 1]]);
            if lo == hi || n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64
                - total * total / n as f64;
            if gain <= tol {
                continue;
            }
            if best.is_none_or(|b| gain > b.gain + tol) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a TreeParams,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let value = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf {
            value,
            n_samples: idx.len(),
        });
        self.nodes.len() - 1
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.cols.len();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) if k < p => {
                let mut f = sample(rng, p, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let n = idx.len();
        if depth >= self.params.max_depth || n < self.params.min_samples_split.max(2) {
            return self.leaf(&idx);
        }
        let features = self.candidate_features();
        let Some(split) = best_split(self.cols, self.y, &idx, &features, self.params.min_samples_leaf)
        else {
            return self.leaf(&idx);
        };
        let x = &self.cols[split.feature];
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i] <= split.threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: 0.0,
            n_samples: n,
        });
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            n_samples: n,
            gain: split.gain,
        };
        id
    }
}

impl RegressionTree {
    /// Fit on the samples listed in `idx` (duplicates allowed, as in a
    /// bootstrap resample). `rng` drives per-split feature subsetting.
    pub fn fit_indices(
        cols: &[Vec<f64>],
        y: &[f64],
        idx: Vec<usize>,
        params: &TreeParams,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Self> {
        if idx.is_empty() || y.is_empty() {
            return Err(Error::data("cannot fit a tree on empty data"));
        }
        if let Some(bad) = y.iter().chain(cols.iter().flatten()).find(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite training value {bad}")));
        }
        let mut b = Builder {
            cols,
            y,
            params,
            rng,
            nodes: Vec::new(),
        };
        b.grow(idx, 0);
        Ok(RegressionTree {
            nodes: b.nodes,
            n_features: cols.len(),
        })
    }

    pub fn fit(x: &[Vec<f64>], y: &[f64], params: &TreeParams) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::data("x and y lengths differ"));
        }
        let cols = to_columns(x);
        Self::fit_indices(&cols, y, (0..y.len()).collect(), params, None)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, n_samples } => Some((*value, *n_samples)),
            _ => None,
        })
    }

    /// Total split gain per feature (unnormalized).
    pub fn add_impurity_decrease(&self, acc: &mut [f64]) {
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                acc[*feature] += gain;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: usize, leaf: usize, split: usize) -> TreeParams {
        TreeParams {
            max_depth: depth,
            min_samples_leaf: leaf,
            min_samples_split: split,
            max_features: None,
        }
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let t = RegressionTree::fit(&x, &[2.5; 10], &params(10, 1, 2)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[3.0]), 2.5);
    }

    #[test]
    fn min_leaf_equal_to_n_gives_mean() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let t = RegressionTree::fit(&x, &y, &params(10, 6, 2)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_row(&[0.0]), 3.5);
    }

    #[test]
    fn step_function_is_recovered() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 8 { 1.0 } else { 4.0 }).collect();
        let t = RegressionTree::fit(&x, &y, &params(5, 1, 2)).unwrap();
        match t.root() {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 7.5);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.predict_row(&[3.0, 0.0]), 1.0);
        assert_eq!(t.predict_row(&[12.0, 0.0]), 4.0);
    }

    #[test]
    fn empty_data_is_an_error() {
        assert!(RegressionTree::fit(&[], &[], &params(3, 1, 2)).is_err());
    }

    #[test]
    fn constraints_hold() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 3.0 + (r[1] * 10.0).sin()).collect();
        let p = params(4, 7, 20);
        let t = RegressionTree::fit(&x, &y, &p).unwrap();
        assert!(t.depth() <= 4);
        assert!(t.leaves().all(|(_, n)| n >= 7));
        for node in &t.nodes {
            if let Node::Split { n_samples, .. } = node {
                assert!(*n_samples >= 20);
            }
        }
    }
}
