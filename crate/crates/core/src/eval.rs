//! Correlation and dissatisfaction metrics, bootstrap intervals, agreement
//! statistics and per-segment reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Segment, SATISFACTION_THRESHOLD};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::models::TrainedModel;
use crate::rng::{derive_seed, rng_from};

pub const DEFAULT_BOOTSTRAP: usize = 1000;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Product-moment correlation, `None` when either side is constant.
pub fn pearson_quiet(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "correlation needs equal lengths");
    if a.len() < 2 {
        return None;
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson r; a constant input yields 0 with a warning.
pub fn pearson_r(pred: &[f64], gold: &[f64]) -> f64 {
    pearson_quiet(pred, gold).unwrap_or_else(|| {
        log::warn!("pearson_r on a constant vector; reporting 0");
        0.0
    })
}

/// 1-based ranks, ties sharing their mean rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

pub fn spearman_quiet(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson_quiet(&average_ranks(a), &average_ranks(b))
}

/// Spearman rho; a constant input yields 0 with a warning.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> f64 {
    spearman_quiet(a, b).unwrap_or_else(|| {
        log::warn!("spearman_rho on a constant vector; reporting 0");
        0.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn prf(pred: &[f64], gold: &[f64], threshold: f64) -> (Prf, bool) {
    assert_eq!(pred.len(), gold.len(), "f_dissatisfaction needs equal lengths");
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for (p, g) in pred.iter().zip(gold) {
        match (*p < threshold, *g < threshold) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            (false, false) => {}
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    let precision = ratio(tp, fp);
    let recall = ratio(tp, fnn);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let undefined = tp + fp + fnn == 0;
    (Prf { precision, recall, f1 }, undefined)
}

/// Precision, recall and F1 of the `< threshold` class.
pub fn f_dissatisfaction(pred: &[f64], gold: &[f64], threshold: f64) -> Prf {
    let (out, undefined) = prf(pred, gold, threshold);
    if undefined {
        log::warn!("no dissatisfied turns in gold or predictions; F-dissatisfaction is 0");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Pearson,
    Spearman,
    FDissatisfaction,
}

impl Metric {
    /// Metric value without degenerate-input warnings.
    pub fn compute(self, pred: &[f64], gold: &[f64]) -> f64 {
        match self {
            Metric::Pearson => pearson_quiet(pred, gold).unwrap_or(0.0),
            Metric::Spearman => spearman_quiet(pred, gold).unwrap_or(0.0),
            Metric::FDissatisfaction => prf(pred, gold, SATISFACTION_THRESHOLD).0.f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }

    /// `0.795 ± 0.010`
    pub fn display(&self) -> String {
        format!("{:.3} ± {:.3}", self.point, self.half_width())
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile interval over `stats`, widened if needed to contain `point`.
pub fn percentile_interval(point: f64, mut stats: Vec<f64>) -> Interval {
    stats.sort_by(f64::total_cmp);
    let lower = quantile(&stats, 0.025).min(point);
    let upper = quantile(&stats, 0.975).max(point);
    Interval { point, lower, upper }
}

/// Resample indices `0..n` with replacement; resample `b` has its own stream.
pub fn resample(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = rng_from(seed, b as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn gather(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Percentile bootstrap over paired resamples; `point` is the full-sample value.
pub fn bootstrap_ci<F>(metric: F, pred: &[f64], gold: &[f64], n_boot: usize, seed: u64) -> Result<Interval>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    if pred.len() != gold.len() || pred.len() < 2 {
        return Err(Error::data("bootstrap needs >= 2 aligned pairs"));
    }
    if n_boot == 0 {
        return Err(Error::config("bootstrap needs at least one resample"));
    }
    let point = metric(pred, gold);
    let stats: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let idx = resample(pred.len(), seed, b);
            metric(&gather(pred, &idx), &gather(gold, &idx))
        })
        .collect();
    Ok(percentile_interval(point, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub a: String,
    pub b: String,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IaaReport {
    pub n_turns: usize,
    pub annotators: Vec<String>,
    pub pairs: Vec<PairAgreement>,
    pub mean_rho: f64,
}

/// Mean pairwise Spearman rho between annotators across all turns.
pub fn iaa(corpus: &Corpus) -> Result<IaaReport> {
    let mut annotators: Option<BTreeSet<&str>> = None;
    for (d, t) in corpus.turns() {
        let set: BTreeSet<&str> = t.annotations.iter().map(|a| a.annotator_id.as_str()).collect();
        match &annotators {
            None => annotators = Some(set),
            Some(first) if *first != set => {
                return Err(Error::data(format!(
                    "turn {} of {} has annotators {:?}, expected {:?}",
                    t.index, d.dialogue_id, set, first
                )))
            }
            _ => {}
        }
    }
    let annotators: Vec<String> = annotators
        .ok_or_else(|| Error::data("agreement needs at least one turn"))?
        .into_iter()
        .map(String::from)
        .collect();
    if annotators.len() < 2 {
        return Err(Error::data("agreement needs at least two annotators"));
    }
    let n_turns = corpus.turn_count();
    if n_turns < 2 {
        return Err(Error::data("agreement needs at least two turns"));
    }
    let column = |id: &str| -> Vec<f64> {
        corpus
            .turns()
            .map(|(_, t)| {
                t.annotations
                    .iter()
                    .find(|a| a.annotator_id == id)
                    .map(|a| a.rating as f64)
                    .expect("aligned annotator sets")
            })
            .collect()
    };
    let cols: Vec<Vec<f64>> = annotators.iter().map(|a| column(a)).collect();
    let mut pairs = Vec::new();
    for i in 0..annotators.len() {
        for j in i + 1..annotators.len() {
            pairs.push(PairAgreement {
                a: annotators[i].clone(),
                b: annotators[j].clone(),
                rho: spearman_rho(&cols[i], &cols[j]),
            });
        }
    }
    let mean_rho = pairs.iter().map(|p| p.rho).sum::<f64>() / pairs.len() as f64;
    Ok(IaaReport {
        n_turns,
        annotators,
        pairs,
        mean_rho,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRatingReport {
    pub n_turns: usize,
    pub pearson: Interval,
}

/// Pearson r between mean annotator labels and explicit user ratings.
pub fn user_rating_correlation(corpus: &Corpus, n_boot: usize, seed: u64) -> Result<UserRatingReport> {
    let mut labels = Vec::new();
    let mut ratings = Vec::new();
    for (_, t) in corpus.turns() {
        if let Some(r) = t.user_rating {
            labels.push(t.label()?);
            ratings.push(r as f64);
        }
    }
    if labels.len() < 2 {
        return Err(Error::data(format!(
            "{} turns carry a user rating; need at least 2",
            labels.len()
        )));
    }
    let pearson = bootstrap_ci(|a, b| Metric::Pearson.compute(a, b), &labels, &ratings, n_boot, seed)?;
    Ok(UserRatingReport {
        n_turns: labels.len(),
        pearson,
    })
}

/// Which turns a block of metrics was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    SingleTurn,
    MultiTurn,
    NewSkill,
    /// Single- and multi-turn test turns together.
    AllTest,
}

impl Scope {
    pub const ALL: [Scope; 4] = [Scope::SingleTurn, Scope::MultiTurn, Scope::NewSkill, Scope::AllTest];

    pub fn contains(self, seg: Segment) -> bool {
        match self {
            Scope::SingleTurn => seg == Segment::SingleTurn,
            Scope::MultiTurn => seg == Segment::MultiTurn,
            Scope::NewSkill => seg == Segment::NewSkill,
            Scope::AllTest => seg != Segment::NewSkill,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scope::SingleTurn => "single_turn",
            Scope::MultiTurn => "multi_turn",
            Scope::NewSkill => "new_skill",
            Scope::AllTest => "all_test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeMetrics {
    pub scope: Scope,
    pub n_turns: usize,
    pub pearson: Interval,
    pub f_dissatisfaction: Interval,
    pub spearman: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub n_boot: usize,
    pub seed: u64,
    pub scopes: Vec<ScopeMetrics>,
    /// Scopes omitted for having fewer than two turns.
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn scope(&self, s: Scope) -> Option<&ScopeMetrics> {
        self.scopes.iter().find(|m| m.scope == s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Metrics with intervals for one set of aligned predictions.
pub fn scope_metrics(scope: Scope, pred: &[f64], gold: &[f64], n_boot: usize, seed: u64) -> Result<ScopeMetrics> {
    let stream = scope as u64;
    let pearson = bootstrap_ci(
        |a, b| Metric::Pearson.compute(a, b),
        pred,
        gold,
        n_boot,
        derive_seed(seed, 2 * stream),
    )?;
    if pearson_quiet(pred, gold).is_none() {
        log::warn!("{}: constant predictions or labels; pearson_r reported as 0", scope.as_str());
    }
    let f = bootstrap_ci(
        |a, b| Metric::FDissatisfaction.compute(a, b),
        pred,
        gold,
        n_boot,
        derive_seed(seed, 2 * stream + 1),
    )?;
    let prf = f_dissatisfaction(pred, gold, SATISFACTION_THRESHOLD);
    Ok(ScopeMetrics {
        scope,
        n_turns: pred.len(),
        pearson,
        f_dissatisfaction: f,
        spearman: spearman_rho(pred, gold),
        precision: prf.precision,
        recall: prf.recall,
    })
}

/// Per-segment report; new-skill rows must come from the holdout set.
pub fn segment_report(
    model: &TrainedModel,
    rows: &[FeatureVector],
    fingerprint: u64,
    n_boot: usize,
    seed: u64,
) -> Result<EvalReport> {
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.values.clone()).collect();
    let pred = model.predict(fingerprint, &x)?;
    let mut scopes = Vec::new();
    let mut notes = Vec::new();
    for scope in Scope::ALL {
        let (p, g): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .zip(&pred)
            .filter(|(r, _)| scope.contains(r.segment))
            .map(|(r, p)| (*p, r.label))
            .unzip();
        if p.len() < 2 {
            notes.push(format!("{}: {} turns, metrics omitted", scope.as_str(), p.len()));
            continue;
        }
        scopes.push(scope_metrics(scope, &p, &g, n_boot, seed)?);
    }
    Ok(EvalReport {
        model: model.kind().to_string(),
        n_boot,
        seed,
        scopes,
        notes,
    })
}

/// Aligned text table: one row per model, `r ± ci` and `F ± ci` per segment.
pub fn render_table(reports: &[EvalReport]) -> String {
    let cols = [
        ("Cor_s", Scope::SingleTurn, true),
        ("F-dis_s", Scope::SingleTurn, false),
        ("Cor_m.t", Scope::MultiTurn, true),
        ("F-dis_m.t", Scope::MultiTurn, false),
        ("Cor_n.s", Scope::NewSkill, true),
        ("F-dis_n.s", Scope::NewSkill, false),
    ];
    let mut grid: Vec<Vec<String>> = vec![std::iter::once("model".to_string())
        .chain(cols.iter().map(|c| c.0.to_string()))
        .collect()];
    for rep in reports {
        let mut row = vec![rep.model.clone()];
        for (_, scope, is_r) in cols {
            row.push(match rep.scope(scope) {
                Some(m) if is_r => m.pearson.display(),
                Some(m) => m.f_dissatisfaction.display(),
                None => "n/a".to_string(),
            });
        }
        grid.push(row);
    }
    let widths: Vec<usize> = (0..=cols.len())
        .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &grid {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}", w = w))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::{dialogue, turn};
    use proptest::prelude::*;
    use rand::Rng;

    /// Covariance formula written out term by term.
    fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn pearson_examples() {
        let g = [2.0, 2.0, 4.0, 5.0];
        assert_eq!(pearson_r(&g, &g), 1.0);
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        assert_eq!(pearson_r(&neg, &g), -1.0);
        let p = [1.0, 2.0, 3.0, 5.0];
        // means 2.75 and 3.25; cov 7.25, var 8.75 and 6.75
        let hand = 7.25 / (8.75f64 * 6.75).sqrt();
        assert!((pearson_r(&p, &g) - hand).abs() < 1e-12);
        assert_eq!(pearson_r(&[3.0; 4], &g), 0.0);
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]) + 0.5).abs() < 1e-12);
        assert_eq!(spearman_rho(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0]), 1.0);
        let a = [0.3, 1.7, -2.0, 5.5];
        let b: Vec<f64> = a.iter().map(|v: &f64| v.exp()).collect();
        assert!((spearman_rho(&a, &b) - 1.0).abs() < 1e-12);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn f_examples() {
        let gold = [1.7, 4.3, 2.3, 5.0];
        let pred = [2.1, 3.5, 3.2, 4.6];
        let f = f_dissatisfaction(&pred, &gold, 3.0);
        assert_eq!((f.precision, f.recall), (1.0, 0.5));
        assert!((f.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f_dissatisfaction(&gold, &gold, 3.0).f1, 1.0);
        assert_eq!(f_dissatisfaction(&[4.0, 5.0], &[3.5, 4.0], 3.0).f1, 0.0);
    }

    #[test]
    fn bootstrap_degenerate_and_deterministic() {
        let ci = bootstrap_ci(|a, b| Metric::FDissatisfaction.compute(a, b), &[2.0, 2.0], &[2.0, 2.0], 200, 1)
            .unwrap();
        assert_eq!((ci.lower, ci.point, ci.upper), (1.0, 1.0, 1.0));
        let p: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let g: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin() + (i % 3) as f64 * 0.2).collect();
        let f = |a: &[f64], b: &[f64]| Metric::Pearson.compute(a, b);
        let a = bootstrap_ci(f, &p, &g, 300, 9).unwrap();
        let b = bootstrap_ci(f, &p, &g, 300, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.point, pearson_r(&p, &g));
        assert!(bootstrap_ci(f, &p[..1], &g[..1], 10, 0).is_err());
    }

    #[test]
    fn bootstrap_width_scales_with_root_n() {
        let sim = |n: usize, seed: u64| {
            let mut rng = rng_from(seed, 0);
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
            let p: Vec<f64> = g.iter().map(|v| v + rng.random_range(-1.5..1.5)).collect();
            (p, g)
        };
        let f = |a: &[f64], b: &[f64]| Metric::Pearson.compute(a, b);
        let mut ratios = Vec::new();
        for s in 0..5 {
            let (p1, g1) = sim(100, s);
            let (p4, g4) = sim(400, s + 100);
            let w1 = bootstrap_ci(f, &p1, &g1, 1000, s).unwrap();
            let w4 = bootstrap_ci(f, &p4, &g4, 1000, s).unwrap();
            ratios.push((w1.upper - w1.lower) / (w4.upper - w4.lower));
        }
        let avg = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((1.6..=2.5).contains(&avg), "{ratios:?}");
    }

    #[test]
    fn iaa_identical_and_misaligned() {
        let d = dialogue(
            "d1",
            Segment::MultiTurn,
            vec![
                turn(1, "a", "b", "x", &[1, 1, 1]),
                turn(2, "a", "b", "x", &[3, 3, 3]),
                turn(3, "a", "b", "x", &[5, 5, 5]),
            ],
        );
        let rep = iaa(&Corpus::new(vec![d.clone()])).unwrap();
        assert_eq!(rep.mean_rho, 1.0);
        assert_eq!(rep.pairs.len(), 3);

        let mut bad = d;
        bad.turns[1].annotations[2].annotator_id = "other".into();
        assert!(iaa(&Corpus::new(vec![bad])).is_err());
    }

    #[test]
    fn user_rating_requires_two() {
        let d = dialogue("d1", Segment::SingleTurn, vec![turn(1, "a", "b", "x", &[4, 4, 4])]);
        assert!(user_rating_correlation(&Corpus::new(vec![d]), 10, 0).is_err());
    }

    #[test]
    fn table_marks_missing_scope() {
        let rep = EvalReport {
            model: "gbrt".into(),
            n_boot: 10,
            seed: 0,
            scopes: vec![ScopeMetrics {
                scope: Scope::SingleTurn,
                n_turns: 10,
                pearson: Interval { point: 0.8, lower: 0.75, upper: 0.85 },
                f_dissatisfaction: Interval { point: 0.7, lower: 0.6, upper: 0.8 },
                spearman: 0.8,
                precision: 0.7,
                recall: 0.7,
            }],
            notes: vec![],
        };
        let t = render_table(&[rep]);
        let header = t.lines().next().unwrap();
        for c in ["Cor_s", "F-dis_s", "Cor_m.t", "F-dis_m.t", "Cor_n.s", "F-dis_n.s"] {
            assert!(header.contains(c));
        }
        assert!(t.contains("0.800 ± 0.050"));
        assert_eq!(t.matches("n/a").count(), 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn pearson_matches_oracle_and_affine_invariance(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let a: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Some(r) = pearson_quiet(&a, &b) {
                prop_assert!((r - pearson_oracle(&a, &b)).abs() < 1e-12);
                let t: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
                prop_assert!((pearson_r(&t, &b) - r).abs() < 1e-12);
            }
        }

        #[test]
        fn spearman_monotone_invariance(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        ) {
            let a: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let t: Vec<f64> = a.iter().map(|v| v.powi(3) + 2.0 * v).collect();
            prop_assert_eq!(spearman_rho(&a, &b), spearman_rho(&t, &b));
        }

        #[test]
        fn f_invariant_to_partition_preserving_relabel(
            pts in prop::collection::vec((1.0f64..5.0, 1.0f64..5.0), 1..40),
        ) {
            let p: Vec<f64> = pts.iter().map(|x| x.0).collect();
            let g: Vec<f64> = pts.iter().map(|x| x.1).collect();
            let squash = |v: f64| if v < 3.0 { 1.0 + (v - 1.0) / 4.0 } else { 4.0 + (v - 3.0) / 2.0 };
            let p2: Vec<f64> = p.iter().map(|v| squash(*v)).collect();
            let g2: Vec<f64> = g.iter().map(|v| squash(*v)).collect();
            prop_assert_eq!(
                Metric::FDissatisfaction.compute(&p, &g),
                Metric::FDissatisfaction.compute(&p2, &g2)
            );
        }

        #[test]
        fn bootstrap_point_is_full_sample_metric(
            pts in prop::collection::vec((1.0f64..5.0, 1.0f64..5.0), 2..30),
            seed in any::<u64>(),
        ) {
            let p: Vec<f64> = pts.iter().map(|x| x.0).collect();
            let g: Vec<f64> = pts.iter().map(|x| x.1).collect();
            for m in [Metric::Pearson, Metric::Spearman, Metric::FDissatisfaction] {
                let ci = bootstrap_ci(|a, b| m.compute(a, b), &p, &g, 50, seed).unwrap();
                prop_assert_eq!(ci.point, m.compute(&p, &g));
                prop_assert!(ci.lower <= ci.point && ci.point <= ci.upper);
            }
        }
    }
}
