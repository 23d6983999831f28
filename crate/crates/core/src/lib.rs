//! Turn-level user satisfaction estimation for task-oriented dialogues.
//!
//! The crate covers corpus I/O, a planted-signal corpus generator, feature
//! extraction, six regressors, evaluation with bootstrap intervals, and
//! feature-set ablation.

// `!(x > 0.0)` is used on purpose so NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use corpus::{Corpus, DataSplit, Dialogue, Segment, Turn};
pub use error::{Error, Result};
pub use eval::{EvalReport, Interval, Scope};
pub use features::{FeatureSchema, FeatureSet, FeatureVector, Lexicon, PopularityTable};
pub use models::{ModelKind, ModelSpec, TrainedModel};
pub use pipeline::{ModelArtifact, SplitParams};
pub use synth::GeneratorConfig;
