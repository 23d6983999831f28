//! Split, featurize, train and evaluate in one place, plus the model artifact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{split_corpus, Corpus, DataSplit};
use crate::error::{Error, Result};
use crate::eval::{segment_report, EvalReport};
use crate::features::{build_popularity_table, featurize_corpus, FeatureSchema, FeatureVector, Lexicon, PopularityTable};
use crate::models::{train, ModelSpec, TrainedModel};

pub const ARTIFACT_VERSION: u32 = 1;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitParams {
    pub fn apply(&self, corpus: &Corpus) -> Result<DataSplit> {
        split_corpus(corpus, self.test_fraction, self.seed)
    }
}

/// Feature vectors for one split under one schema.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: FeatureSchema,
    pub table: PopularityTable,
    pub train: Vec<FeatureVector>,
    /// Test turns followed by holdout turns.
    pub eval: Vec<FeatureVector>,
}

/// Builds the popularity table from the training part only, then featurizes.
pub fn prepare(split: &DataSplit, schema: &FeatureSchema, lexicon: &Lexicon) -> Result<Prepared> {
    let table = build_popularity_table(&split.train)?;
    let train = featurize_corpus(&split.train, &table, schema, lexicon)?;
    let mut eval = featurize_corpus(&split.test, &table, schema, lexicon)?;
    eval.extend(featurize_corpus(&split.holdout, &table, schema, lexicon)?);
    Ok(Prepared {
        schema: schema.clone(),
        table,
        train,
        eval,
    })
}

pub fn matrix(rows: &[FeatureVector]) -> (Vec<Vec<f64>>, Vec<f64>) {
    rows.iter().map(|r| (r.values.clone(), r.label)).unzip()
}

pub fn fit_prepared(spec: &ModelSpec, prepared: &Prepared) -> Result<TrainedModel> {
    let (x, y) = matrix(&prepared.train);
    train(spec, &prepared.schema, &x, &y)
}

/// Everything needed to score a corpus the way the model was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub model: TrainedModel,
    pub popularity: PopularityTable,
    pub lexicon: Lexicon,
    pub split: SplitParams,
}

impl ModelArtifact {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: ModelArtifact = serde_json::from_str(s)?;
        if a.version != ARTIFACT_VERSION {
            return Err(Error::data(format!(
                "model artifact version {} is not supported (expected {ARTIFACT_VERSION})",
                a.version
            )));
        }
        if a.model.schema.fingerprint() != a.model.fingerprint {
            return Err(Error::data("model artifact fingerprint does not match its schema"));
        }
        Ok(a)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Re-split `corpus` as at training time and score test plus holdout turns.
    pub fn evaluate(&self, corpus: &Corpus, n_boot: usize, seed: u64) -> Result<EvalReport> {
        let split = self.split.apply(corpus)?;
        let schema = &self.model.schema;
        let mut rows = featurize_corpus(&split.test, &self.popularity, schema, &self.lexicon)?;
        rows.extend(featurize_corpus(&split.holdout, &self.popularity, schema, &self.lexicon)?);
        segment_report(&self.model, &rows, schema.fingerprint(), n_boot, seed)
    }
}

/// Split, featurize with the full schema, and train one model.
pub fn train_artifact(
    corpus: &Corpus,
    spec: &ModelSpec,
    split: SplitParams,
    lexicon: &Lexicon,
) -> Result<(ModelArtifact, Prepared)> {
    let parts = split.apply(corpus)?;
    let prepared = prepare(&parts, &FeatureSchema::full(), lexicon)?;
    log::info!("training {}", spec.describe());
    let model = fit_prepared(spec, &prepared)?;
    Ok((
        ModelArtifact {
            version: ARTIFACT_VERSION,
            model,
            popularity: prepared.table.clone(),
            lexicon: lexicon.clone(),
            split,
        },
        prepared,
    ))
}
