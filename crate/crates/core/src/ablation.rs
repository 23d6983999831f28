//! Leave-one-feature-set-out retraining with paired bootstrap differences.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::DataSplit;
use crate::error::{Error, Result};
use crate::eval::{percentile_interval, resample, Interval, Metric, Scope};
use crate::features::{FeatureSchema, FeatureSet, Lexicon};
use crate::models::{ModelSpec, TrainedModel};
use crate::pipeline::{fit_prepared, matrix, prepare, Prepared};
use crate::rng::derive_seed;

/// `(with - without) / without`; `None` when the baseline is 0.
pub fn relative_improvement(with: f64, without: f64) -> Option<f64> {
    if without == 0.0 {
        None
    } else {
        Some((with - without) / without)
    }
}

/// Bootstrap CI of `metric(with) - metric(without)` with jointly resampled indices.
pub fn paired_difference_ci(
    metric: Metric,
    pred_with: &[f64],
    pred_without: &[f64],
    gold: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<Interval> {
    let n = gold.len();
    if pred_with.len() != n || pred_without.len() != n {
        return Err(Error::data(format!(
            "paired difference needs aligned vectors ({} / {} / {n})",
            pred_with.len(),
            pred_without.len()
        )));
    }
    if n < 2 || n_boot == 0 {
        return Err(Error::data("paired difference needs >= 2 turns and >= 1 resample"));
    }
    let point = metric.compute(pred_with, gold) - metric.compute(pred_without, gold);
    let stats: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let idx = resample(n, seed, b);
            let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let g = pick(gold);
            metric.compute(&pick(pred_with), &g) - metric.compute(&pick(pred_without), &g)
        })
        .collect();
    Ok(percentile_interval(point, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeDelta {
    pub scope: Scope,
    pub n_turns: usize,
    pub r_with: f64,
    pub r_without: f64,
    pub r_relative: Option<f64>,
    pub r_diff: Interval,
    pub f_with: f64,
    pub f_without: f64,
    pub f_relative: Option<f64>,
    pub f_diff: Interval,
    /// The r difference interval excludes 0.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub feature_set: FeatureSet,
    pub columns_removed: usize,
    pub scopes: Vec<ScopeDelta>,
}

impl AblationResult {
    pub fn scope(&self, s: Scope) -> Option<&ScopeDelta> {
        self.scopes.iter().find(|d| d.scope == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationFailure {
    pub feature_set: FeatureSet,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub model: String,
    pub n_boot: usize,
    pub seed: u64,
    pub results: Vec<AblationResult>,
    pub failures: Vec<AblationFailure>,
}

fn predictions(model: &TrainedModel, prepared: &Prepared) -> Result<Vec<f64>> {
    let (x, _) = matrix(&prepared.eval);
    model.predict(prepared.schema.fingerprint(), &x)
}

fn deltas(
    prepared: &Prepared,
    with: &[f64],
    without: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<Vec<ScopeDelta>> {
    let mut out = Vec::new();
    for scope in Scope::ALL {
        let idx: Vec<usize> = prepared
            .eval
            .iter()
            .enumerate()
            .filter(|(_, r)| scope.contains(r.segment))
            .map(|(i, _)| i)
            .collect();
        if idx.len() < 2 {
            continue;
        }
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let gold: Vec<f64> = idx.iter().map(|&i| prepared.eval[i].label).collect();
        let (pw, po) = (pick(with), pick(without));
        let stream = 2 * scope as u64;
        let r_diff = paired_difference_ci(Metric::Pearson, &pw, &po, &gold, n_boot, derive_seed(seed, stream))?;
        let f_diff = paired_difference_ci(
            Metric::FDissatisfaction,
            &pw,
            &po,
            &gold,
            n_boot,
            derive_seed(seed, stream + 1),
        )?;
        let r_with = Metric::Pearson.compute(&pw, &gold);
        let r_without = Metric::Pearson.compute(&po, &gold);
        let f_with = Metric::FDissatisfaction.compute(&pw, &gold);
        let f_without = Metric::FDissatisfaction.compute(&po, &gold);
        out.push(ScopeDelta {
            scope,
            n_turns: idx.len(),
            r_with,
            r_without,
            r_relative: relative_improvement(r_with, r_without),
            r_diff,
            f_with,
            f_without,
            f_relative: relative_improvement(f_with, f_without),
            f_diff,
            significant: r_diff.excludes_zero(),
        });
    }
    Ok(out)
}

/// Train the full-schema model once, then retrain without each tagged set.
///
/// A failing run is recorded in `failures` and the remaining sets still run.
pub fn ablate(
    split: &DataSplit,
    spec: &ModelSpec,
    sets: &[FeatureSet],
    lexicon: &Lexicon,
    n_boot: usize,
    seed: u64,
) -> Result<AblationReport> {
    let full_schema = FeatureSchema::full();
    for s in sets {
        if !s.is_new() {
            return Err(Error::config(format!("`{s}` is not one of the ablatable feature sets")));
        }
    }
    let full = prepare(split, &full_schema, lexicon)?;
    let full_model = fit_prepared(spec, &full)?;
    let with = predictions(&full_model, &full)?;

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for &set in sets {
        let run = || -> Result<AblationResult> {
            let schema = full_schema.without(set)?;
            let reduced = prepare(split, &schema, lexicon)?;
            let model = fit_prepared(spec, &reduced)?;
            let without = predictions(&model, &reduced)?;
            Ok(AblationResult {
                feature_set: set,
                columns_removed: full_schema.len() - schema.len(),
                scopes: deltas(&full, &with, &without, n_boot, seed)?,
            })
        };
        match run() {
            Ok(r) => results.push(r),
            Err(e) => {
                log::error!("ablation of `{set}` failed: {e}");
                failures.push(AblationFailure {
                    feature_set: set,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(AblationReport {
        model: spec.kind().to_string(),
        n_boot,
        seed,
        results,
        failures,
    })
}

/// Round to `digits` and drop the sign of a rounded zero so tables never show `-0.0`.
fn tidy(x: f64, digits: i32) -> f64 {
    let k = 10f64.powi(digits);
    (x * k).round() / k + 0.0
}

impl AblationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rows are feature sets; each segment gets Δr, relative Δr, ΔF and significance.
    pub fn to_markdown(&self) -> String {
        let scopes = [Scope::SingleTurn, Scope::MultiTurn, Scope::NewSkill, Scope::AllTest];
        let mut out = String::from("| feature set |");
        for s in scopes {
            let _ = write!(out, " Δr {0} | rel Δr {0} | ΔF-dis {0} | sig {0} |", s.as_str());
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(4 * scopes.len()));
        out.push('\n');
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:+.1}%", tidy(100.0 * x, 1)));
        for r in &self.results {
            let _ = write!(out, "| {} |", r.feature_set);
            for s in scopes {
                match r.scope(s) {
                    Some(d) => {
                        let _ = write!(
                            out,
                            " {:+.3} | {} | {:+.3} | {} |",
                            tidy(d.r_diff.point, 3),
                            pct(d.r_relative),
                            tidy(d.f_diff.point, 3),
                            if d.significant { "yes" } else { "no" }
                        );
                    }
                    None => out.push_str(" n/a | n/a | n/a | n/a |"),
                }
            }
            out.push('\n');
        }
        for f in &self.failures {
            let _ = writeln!(out, "\nfailed: {}: {}", f.feature_set, f.message);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_improvement_percentages() {
        let a = relative_improvement(0.796, 0.741).unwrap();
        assert_eq!(format!("{:.1}", 100.0 * a), "7.4");
        assert!((a - 0.074224).abs() < 1e-6);
        let b = relative_improvement(0.67, 0.496).unwrap();
        assert_eq!(format!("{:.1}", 100.0 * b), "35.1");
        assert_eq!(relative_improvement(0.5, 0.0), None);
    }

    #[test]
    fn identical_predictions_give_zero_difference() {
        let gold: Vec<f64> = (0..40).map(|i| 1.0 + (i % 5) as f64).collect();
        let pred: Vec<f64> = gold.iter().map(|g| g * 0.8 + 0.5).collect();
        for m in [Metric::Pearson, Metric::FDissatisfaction] {
            let ci = paired_difference_ci(m, &pred, &pred, &gold, 200, 3).unwrap();
            assert_eq!((ci.lower, ci.point, ci.upper), (0.0, 0.0, 0.0));
            assert!(!ci.excludes_zero());
        }
        let again = paired_difference_ci(Metric::Pearson, &pred, &gold, &gold, 200, 3).unwrap();
        assert_eq!(again, paired_difference_ci(Metric::Pearson, &pred, &gold, &gold, 200, 3).unwrap());
        assert!(paired_difference_ci(Metric::Pearson, &pred, &pred[1..], &gold, 10, 0).is_err());
    }
}
