//! Six regressors behind one train/predict interface.

pub mod ensemble;
pub mod lasso;
pub mod mlp;
pub mod svr;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::pearson_quiet;
use crate::features::{FeatureSchema, Standardizer};
use crate::rng::rng_from;

pub use ensemble::{Forest, ForestParams, Gbrt, GbrtParams};
pub use lasso::{fit_lasso, LassoModel, LassoParams};
pub use mlp::{fit_mlp, Init, Mlp, MlpParams};
pub use svr::{fit_svr, SvrModel, SvrParams};
pub use tree::{RegressionTree, TreeParams};

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lasso,
    Tree,
    Forest,
    Gbrt,
    Svr,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Lasso,
        ModelKind::Tree,
        ModelKind::Forest,
        ModelKind::Gbrt,
        ModelKind::Svr,
        ModelKind::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lasso => "lasso",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Gbrt => "gbrt",
            ModelKind::Svr => "svr",
            ModelKind::Mlp => "mlp",
        }
    }

    /// Whether inputs are z-scored before training.
    pub fn standardizes(self) -> bool {
        matches!(self, ModelKind::Lasso | ModelKind::Svr | ModelKind::Mlp)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown model kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Lasso(LassoParams),
    Tree(TreeParams),
    Forest(ForestParams),
    Gbrt(GbrtParams),
    Svr(SvrParams),
    Mlp(MlpParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub params: ModelParams,
    pub seed: u64,
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_opt(key: &str, v: &str) -> Result<Option<usize>> {
    match v.trim() {
        "none" | "auto" => Ok(None),
        s => parse_num(key, s).map(Some),
    }
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        let params = match kind {
            ModelKind::Lasso => ModelParams::Lasso(LassoParams::default()),
            ModelKind::Tree => ModelParams::Tree(TreeParams::default()),
            ModelKind::Forest => ModelParams::Forest(ForestParams::default()),
            ModelKind::Gbrt => ModelParams::Gbrt(GbrtParams::default()),
            ModelKind::Svr => ModelParams::Svr(SvrParams::default()),
            ModelKind::Mlp => ModelParams::Mlp(MlpParams::default()),
        };
        ModelSpec { params, seed }
    }

    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Lasso(_) => ModelKind::Lasso,
            ModelParams::Tree(_) => ModelKind::Tree,
            ModelParams::Forest(_) => ModelKind::Forest,
            ModelParams::Gbrt(_) => ModelKind::Gbrt,
            ModelParams::Svr(_) => ModelKind::Svr,
            ModelParams::Mlp(_) => ModelKind::Mlp,
        }
    }

    /// Override one hyperparameter, e.g. `max_depth = 10`.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let unknown = || Error::config(format!("unknown hyperparameter `{key}` for this model"));
        match &mut self.params {
            ModelParams::Lasso(p) => match key {
                "alpha" => p.alpha = parse_num(key, v)?,
                "tol" => p.tol = parse_num(key, v)?,
                "max_sweeps" => p.max_sweeps = parse_num(key, v)?,
                _ => return Err(unknown()),
            },
            ModelParams::Tree(p) => match key {
                "max_depth" => p.max_depth = parse_num(key, v)?,
                "min_samples_leaf" => p.min_samples_leaf = parse_num(key, v)?,
                "min_samples_split" => p.min_samples_split = parse_num(key, v)?,
                _ => return Err(unknown()),
            },
            ModelParams::Forest(p) => match key {
                "n_trees" => p.n_trees = parse_num(key, v)?,
                "max_depth" => p.max_depth = parse_num(key, v)?,
                "min_samples_leaf" => p.min_samples_leaf = parse_num(key, v)?,
                "min_samples_split" => p.min_samples_split = parse_num(key, v)?,
                "bootstrap" => p.bootstrap = parse_num(key, v)?,
                "max_features" => p.max_features = parse_opt(key, v)?,
                _ => return Err(unknown()),
            },
            ModelParams::Gbrt(p) => match key {
                "n_stages" => p.n_stages = parse_num(key, v)?,
                "learning_rate" => p.learning_rate = parse_num(key, v)?,
                "max_depth" => p.max_depth = parse_num(key, v)?,
                "min_samples_leaf" => p.min_samples_leaf = parse_num(key, v)?,
                "min_samples_split" => p.min_samples_split = parse_num(key, v)?,
                _ => return Err(unknown()),
            },
            ModelParams::Svr(p) => match key {
                "c" => p.c = parse_num(key, v)?,
                "gamma" => p.gamma = parse_num(key, v)?,
                "epsilon" => p.epsilon = parse_num(key, v)?,
                "tol" => p.tol = parse_num(key, v)?,
                _ => return Err(unknown()),
            },
            ModelParams::Mlp(p) => match key {
                "hidden_layers" => p.hidden_layers = parse_num(key, v)?,
                "hidden_size" => p.hidden_size = parse_num(key, v)?,
                "batch_size" => p.batch_size = parse_num(key, v)?,
                "learning_rate" => p.learning_rate = parse_num(key, v)?,
                "momentum" => p.momentum = parse_num(key, v)?,
                "epochs" => p.epochs = parse_num(key, v)?,
                _ => return Err(unknown()),
            },
        }
        Ok(())
    }

    /// One-line `key=value` rendering of every hyperparameter.
    pub fn describe(&self) -> String {
        let v = serde_json::to_value(&self.params).expect("params serialize");
        let mut parts = Vec::new();
        if let Some(map) = v.as_object() {
            for (k, val) in map {
                if k != "kind" {
                    parts.push(format!("{k}={val}"));
                }
            }
        }
        format!("{} {} seed={}", self.kind(), parts.join(" "), self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learned {
    Lasso(LassoModel),
    Tree(RegressionTree),
    Forest(Forest),
    Gbrt(Gbrt),
    Svr(SvrModel),
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub schema: FeatureSchema,
    pub fingerprint: u64,
    pub standardizer: Option<Standardizer>,
    pub learned: Learned,
}

fn check_matrix(x: &[Vec<f64>], p: usize) -> Result<()> {
    if let Some(bad) = x.iter().find(|r| r.len() != p) {
        return Err(Error::data(format!(
            "row has {} features, schema has {p}",
            bad.len()
        )));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::data("feature matrix contains non-finite values"));
    }
    Ok(())
}

/// Train `spec` on raw (unstandardized) feature rows.
pub fn train(spec: &ModelSpec, schema: &FeatureSchema, x: &[Vec<f64>], y: &[f64]) -> Result<TrainedModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::data("training needs non-empty aligned data"));
    }
    check_matrix(x, schema.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("labels contain non-finite values"));
    }
    let kind = spec.kind();
    let standardizer = if kind.standardizes() {
        Some(Standardizer::fit(x, &schema.indicator_mask())?)
    } else {
        None
    };
    let xs;
    let xin: &[Vec<f64>] = match &standardizer {
        Some(s) => {
            xs = s.apply(x);
            &xs
        }
        None => x,
    };
    let learned = match &spec.params {
        ModelParams::Lasso(p) => Learned::Lasso(fit_lasso(xin, y, p)?.model),
        ModelParams::Tree(p) => Learned::Tree(RegressionTree::fit(xin, y, p)?),
        ModelParams::Forest(p) => Learned::Forest(Forest::fit(xin, y, p, spec.seed)?),
        ModelParams::Gbrt(p) => Learned::Gbrt(Gbrt::fit(xin, y, p)?),
        ModelParams::Svr(p) => {
            warn_if_unstandardized(xin, schema);
            Learned::Svr(fit_svr(xin, y, p)?.model)
        }
        ModelParams::Mlp(p) => Learned::Mlp(fit_mlp(xin, y, p, spec.seed)?.model),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        schema: schema.clone(),
        fingerprint: schema.fingerprint(),
        standardizer,
        learned,
    })
}

fn warn_if_unstandardized(x: &[Vec<f64>], schema: &FeatureSchema) {
    let n = x.len() as f64;
    for (j, f) in schema.features.iter().enumerate() {
        if f.indicator {
            continue;
        }
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
        if mean.abs() > 0.5 {
            log::warn!("svr input `{}` looks unstandardized (mean {mean:.3})", f.name);
        }
    }
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// Unclipped model output for one raw row.
    pub fn predict_raw_row(&self, row: &[f64]) -> f64 {
        let z;
        let row = match &self.standardizer {
            Some(s) => {
                z = s.apply_row(row);
                &z[..]
            }
            None => row,
        };
        match &self.learned {
            Learned::Lasso(m) => m.predict_row(row),
            Learned::Tree(m) => m.predict_row(row),
            Learned::Forest(m) => m.predict_row(row),
            Learned::Gbrt(m) => m.predict_row(row),
            Learned::Svr(m) => m.predict_row(row),
            Learned::Mlp(m) => m.predict_row(row),
        }
    }

    /// Ratings clipped to [1,5]; rejects rows built with another schema.
    pub fn predict(&self, fingerprint: u64, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if fingerprint != self.fingerprint {
            return Err(Error::SchemaMismatch {
                expected: self.fingerprint,
                actual: fingerprint,
            });
        }
        check_matrix(x, self.schema.len())?;
        use rayon::prelude::*;
        Ok(x
            .par_iter()
            .map(|r| clip_rating(self.predict_raw_row(r)))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(s)?;
        if m.schema.fingerprint() != m.fingerprint {
            return Err(Error::data("model artifact fingerprint does not match its schema"));
        }
        Ok(m)
    }
}

pub fn clip_rating(v: f64) -> f64 {
    v.clamp(MIN_RATING, MAX_RATING)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    Impurity,
    CoefficientMagnitude,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: ImportanceMethod,
    /// Sorted by descending score, ties by schema order.
    pub scores: Vec<(String, f64)>,
}

impl ImportanceReport {
    fn new(method: ImportanceMethod, schema: &FeatureSchema, raw: Vec<f64>) -> Self {
        let mut scores: Vec<(usize, f64)> = raw.into_iter().enumerate().collect();
        scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ImportanceReport {
            method,
            scores: scores
                .into_iter()
                .map(|(j, s)| (schema.features[j].name.clone(), s))
                .collect(),
        }
    }

    pub fn top(&self) -> Option<&str> {
        self.scores.first().map(|(n, _)| n.as_str())
    }
}

const PERMUTATION_REPEATS: usize = 5;

/// Impurity for tree models, |coefficient| for lasso, permutation otherwise.
pub fn feature_importance(model: &TrainedModel, x_val: &[Vec<f64>], y_val: &[f64]) -> Result<ImportanceReport> {
    let p = model.schema.len();
    let trees: Vec<&RegressionTree> = match &model.learned {
        Learned::Tree(t) => vec![t],
        Learned::Forest(f) => f.trees.iter().collect(),
        Learned::Gbrt(g) => g.trees.iter().collect(),
        Learned::Lasso(m) => {
            let raw = m.weights.iter().map(|w| w.abs()).collect();
            return Ok(ImportanceReport::new(
                ImportanceMethod::CoefficientMagnitude,
                &model.schema,
                raw,
            ));
        }
        Learned::Svr(_) | Learned::Mlp(_) => {
            return permutation_importance(model, x_val, y_val);
        }
    };
    let mut acc = vec![0.0; p];
    for t in trees {
        t.add_impurity_decrease(&mut acc);
    }
    let total: f64 = acc.iter().sum();
    if total > 0.0 {
        acc.iter_mut().for_each(|v| *v /= total);
    }
    Ok(ImportanceReport::new(ImportanceMethod::Impurity, &model.schema, acc))
}

fn permutation_importance(model: &TrainedModel, x: &[Vec<f64>], y: &[f64]) -> Result<ImportanceReport> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::data("permutation importance needs >= 2 aligned validation rows"));
    }
    let fp = model.fingerprint;
    let base = pearson_quiet(&model.predict(fp, x)?, y).unwrap_or(0.0);
    let mut raw = Vec::with_capacity(model.schema.len());
    for j in 0..model.schema.len() {
        let mut drop = 0.0;
        for rep in 0..PERMUTATION_REPEATS {
            let mut rng = rng_from(model.spec.seed, (j * PERMUTATION_REPEATS + rep) as u64);
            let mut col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            col.shuffle(&mut rng);
            let shuffled: Vec<Vec<f64>> = x
                .iter()
                .zip(&col)
                .map(|(r, v)| {
                    let mut r = r.clone();
                    r[j] = *v;
                    r
                })
                .collect();
            let r = pearson_quiet(&model.predict(fp, &shuffled)?, y).unwrap_or(0.0);
            drop += base - r;
        }
        raw.push((drop / PERMUTATION_REPEATS as f64).max(0.0));
    }
    Ok(ImportanceReport::new(ImportanceMethod::Permutation, &model.schema, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSchema;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize) -> (FeatureSchema, Vec<Vec<f64>>, Vec<f64>) {
        let schema = FeatureSchema::full();
        let p = schema.len();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let y = x.iter().map(|r| 1.0 + 4.0 * r[0] * r[0]).collect();
        (schema, x, y)
    }

    fn quick_spec(kind: ModelKind) -> ModelSpec {
        let mut s = ModelSpec::default_for(kind, 1);
        match kind {
            ModelKind::Forest => s.set("n_trees", "5").unwrap(),
            ModelKind::Gbrt => s.set("n_stages", "10").unwrap(),
            ModelKind::Mlp => {
                s.set("epochs", "3").unwrap();
                s.set("hidden_size", "8").unwrap();
            }
            _ => {}
        }
        s
    }

    #[test]
    fn default_hyperparameters() {
        let gbrt = GbrtParams::default();
        assert_eq!((gbrt.max_depth, gbrt.min_samples_leaf, gbrt.min_samples_split), (23, 17, 59));
        let tree = TreeParams::default();
        assert_eq!((tree.max_depth, tree.min_samples_leaf, tree.min_samples_split), (33, 31, 23));
        let forest = ForestParams::default();
        assert_eq!((forest.max_depth, forest.min_samples_leaf, forest.min_samples_split), (49, 11, 27));
        assert_eq!(LassoParams::default().alpha, 0.001);
        let svr = SvrParams::default();
        assert_eq!((svr.c, svr.gamma), (2.0, 0.024));
        let mlp = MlpParams::default();
        assert_eq!((mlp.hidden_layers, mlp.hidden_size, mlp.batch_size), (3, 100, 128));
    }

    #[test]
    fn every_model_is_clipped_and_schema_guarded() {
        let (schema, x, y) = toy(120);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let wild: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..schema.len()).map(|_| rng.random_range(-50.0..50.0)).collect())
            .collect();
        for kind in ModelKind::ALL {
            let m = train(&quick_spec(kind), &schema, &x, &y).unwrap();
            let preds = m.predict(schema.fingerprint(), &wild).unwrap();
            assert!(preds.iter().all(|v| (1.0..=5.0).contains(v)), "{kind}");
            assert!(matches!(
                m.predict(schema.fingerprint() ^ 1, &wild),
                Err(Error::SchemaMismatch { .. })
            ));
            // Artifact round trip keeps predictions bit-identical.
            let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back.predict(schema.fingerprint(), &wild).unwrap(), preds, "{kind}");
        }
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_rating(5.7), 5.0);
        assert_eq!(clip_rating(0.2), 1.0);
        assert_eq!(clip_rating(3.3), 3.3);
    }

    #[test]
    fn importance_methods() {
        let (schema, x, y) = toy(200);
        let tree = train(&quick_spec(ModelKind::Tree), &schema, &x, &y).unwrap();
        let rep = feature_importance(&tree, &x, &y).unwrap();
        assert_eq!(rep.method, ImportanceMethod::Impurity);
        assert!((rep.scores.iter().map(|s| s.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(rep.top(), Some(schema.features[0].name.as_str()));

        let mut stump = ModelSpec::default_for(ModelKind::Tree, 0);
        stump.set("min_samples_leaf", "1000").unwrap();
        let leaf = train(&stump, &schema, &x, &y).unwrap();
        let rep = feature_importance(&leaf, &x, &y).unwrap();
        assert!(rep.scores.iter().all(|s| s.1 == 0.0));

        let lasso = train(&quick_spec(ModelKind::Lasso), &schema, &x, &y).unwrap();
        let rep = feature_importance(&lasso, &x, &y).unwrap();
        assert_eq!(rep.method, ImportanceMethod::CoefficientMagnitude);
        assert_eq!(rep.top(), Some(schema.features[0].name.as_str()));

        let svr = train(&quick_spec(ModelKind::Svr), &schema, &x, &y).unwrap();
        let rep = feature_importance(&svr, &x, &y).unwrap();
        assert_eq!(rep.method, ImportanceMethod::Permutation);
        assert!(rep.scores.iter().all(|s| s.1 >= 0.0));
        assert_eq!(rep.top(), Some(schema.features[0].name.as_str()));
    }

    #[test]
    fn spec_overrides() {
        let mut s = ModelSpec::default_for(ModelKind::Gbrt, 0);
        s.set("n_stages", "7").unwrap();
        assert!(s.describe().contains("n_stages=7"));
        assert!(s.describe().contains("max_depth=23"));
        assert!(s.set("gamma", "1").is_err());
        assert!("boost".parse::<ModelKind>().is_err());
    }
}
