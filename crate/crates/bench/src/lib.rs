//! Shared fixtures for the criterion benches in `benches/`.

use turnsat::pipeline::{matrix, prepare, Prepared, SplitParams};
use turnsat::synth::generate_corpus;
use turnsat::{Corpus, FeatureSchema, GeneratorConfig, Lexicon};

/// A generated corpus of `n` dialogues with seed 1.
pub fn corpus(n: usize) -> Corpus {
    let cfg = GeneratorConfig {
        n_dialogues: n,
        seed: 1,
        ..GeneratorConfig::default()
    };
    generate_corpus(&cfg).expect("default config is valid").0
}

/// Split and featurize `corpus` with the full schema.
pub fn prepared(corpus: &Corpus) -> Prepared {
    let split = SplitParams { test_fraction: 0.2, seed: 1 }.apply(corpus).expect("split");
    prepare(&split, &FeatureSchema::full(), &Lexicon::default()).expect("featurize")
}

/// Training matrix and labels.
pub fn train_xy(p: &Prepared) -> (Vec<Vec<f64>>, Vec<f64>) {
    matrix(&p.train)
}
