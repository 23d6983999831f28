//! Turn-level feature extraction.
//!
//! A feature vector for turn `n` of a dialogue is built from the turn itself,
//! the forward pair `(n, n+1)` of user requests, the dialogue prefix `1..=n`,
//! and a popularity table aggregated over the training corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue, Segment, Turn};
use crate::error::{Error, Result};

/// Groups of columns that are added or removed together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    SluConfidence,
    Lengths,
    Timing,
    DialogueLength,
    Paraphrase,
    Cohesion,
    Popularity,
    Unactionable,
    Diversity,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 9] = [
        FeatureSet::SluConfidence,
        FeatureSet::Lengths,
        FeatureSet::Timing,
        FeatureSet::DialogueLength,
        FeatureSet::Paraphrase,
        FeatureSet::Cohesion,
        FeatureSet::Popularity,
        FeatureSet::Unactionable,
        FeatureSet::Diversity,
    ];

    /// The five ablatable sets.
    pub const NEW: [FeatureSet; 5] = [
        FeatureSet::Paraphrase,
        FeatureSet::Cohesion,
        FeatureSet::Popularity,
        FeatureSet::Unactionable,
        FeatureSet::Diversity,
    ];

    pub fn is_new(self) -> bool {
        Self::NEW.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::SluConfidence => "slu_confidence",
            FeatureSet::Lengths => "lengths",
            FeatureSet::Timing => "timing",
            FeatureSet::DialogueLength => "dialogue_length",
            FeatureSet::Paraphrase => "paraphrase",
            FeatureSet::Cohesion => "cohesion",
            FeatureSet::Popularity => "popularity",
            FeatureSet::Unactionable => "unactionable",
            FeatureSet::Diversity => "diversity",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown feature set `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub set: FeatureSet,
    /// Binary 0/1 column (presence or missingness flag); never standardized.
    pub indicator: bool,
}

/// Every column the extractor knows how to produce, in canonical order.
const CATALOG: &[(&str, FeatureSet, bool)] = &[
    ("asr_confidence", FeatureSet::SluConfidence, false),
    ("nlu_confidence", FeatureSet::SluConfidence, false),
    ("user_len_tokens", FeatureSet::Lengths, false),
    ("system_len_tokens", FeatureSet::Lengths, false),
    ("inter_request_gap_s", FeatureSet::Timing, false),
    ("gap_present", FeatureSet::Timing, true),
    ("dialogue_len_so_far", FeatureSet::DialogueLength, false),
    ("paraphrase_similarity", FeatureSet::Paraphrase, false),
    ("paraphrase_intent_repeat", FeatureSet::Paraphrase, true),
    ("paraphrase_present", FeatureSet::Paraphrase, true),
    ("cohesion", FeatureSet::Cohesion, false),
    ("domain_count_log1p", FeatureSet::Popularity, false),
    ("domain_ratio", FeatureSet::Popularity, false),
    ("intent_count_log1p", FeatureSet::Popularity, false),
    ("intent_ratio", FeatureSet::Popularity, false),
    ("domain_count_raw", FeatureSet::Popularity, false),
    ("intent_count_raw", FeatureSet::Popularity, false),
    ("domain_missing", FeatureSet::Popularity, true),
    ("intent_missing", FeatureSet::Popularity, true),
    ("unactionable", FeatureSet::Unactionable, true),
    ("topic_diversity", FeatureSet::Diversity, false),
];

/// Ordered list of named columns, each tagged with its feature set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn full() -> Self {
        FeatureSchema {
            features: CATALOG
                .iter()
                .map(|(n, s, i)| FeatureDef {
                    name: (*n).to_string(),
                    set: *s,
                    indicator: *i,
                })
                .collect(),
        }
    }

    /// Copy with every column of `set` removed.
    pub fn without(&self, set: FeatureSet) -> Result<Self> {
        if !self.features.iter().any(|f| f.set == set) {
            return Err(Error::config(format!("feature set `{set}` not in schema")));
        }
        Ok(FeatureSchema {
            features: self.features.iter().filter(|f| f.set != set).cloned().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn sets(&self) -> BTreeSet<FeatureSet> {
        self.features.iter().map(|f| f.set).collect()
    }

    pub fn count_in(&self, set: FeatureSet) -> usize {
        self.features.iter().filter(|f| f.set == set).count()
    }

    pub fn indicator_mask(&self) -> Vec<bool> {
        self.features.iter().map(|f| f.indicator).collect()
    }

    /// FNV-1a over the ordered column names and set tags.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for f in &self.features {
            for b in f.name.bytes().chain([0u8]).chain(f.set.as_str().bytes()).chain([0xff]) {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::config(format!("duplicate feature `{}`", f.name)));
            }
            if !CATALOG.iter().any(|(n, s, _)| *n == f.name && *s == f.set) {
                return Err(Error::config(format!("unknown feature `{}`", f.name)));
            }
        }
        Ok(())
    }

    fn catalog_indices(&self) -> Vec<usize> {
        self.features
            .iter()
            .map(|f| {
                CATALOG
                    .iter()
                    .position(|(n, _, _)| *n == f.name)
                    .expect("schema validated against catalog")
            })
            .collect()
    }
}

/// Lowercase, split on whitespace, trim punctuation at token edges.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.replace('\u{2019}', "'")
                .trim_matches(|c: char| c.is_ascii_punctuation() || "‘“”…¿¡«»".contains(c))
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Token-set Jaccard similarity; 0 when both sides are empty.
pub fn jaccard<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    let sa: BTreeSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let sb: BTreeSet<&str> = b.iter().map(AsRef::as_ref).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

pub fn cohesion_feature(turn: &Turn) -> f64 {
    jaccard(&tokenize(&turn.user_text), &tokenize(&turn.system_text))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParaphraseFeatures {
    pub syntactic_sim: f64,
    pub intent_repeat: f64,
    pub present: f64,
}

/// Similarity between user request `n` and the next user request.
pub fn paraphrase_features(dialogue: &Dialogue, n: usize) -> ParaphraseFeatures {
    match (dialogue.turn(n), dialogue.turn(n + 1)) {
        (Some(cur), Some(next)) => ParaphraseFeatures {
            syntactic_sim: jaccard(&tokenize(&cur.user_text), &tokenize(&next.user_text)),
            intent_repeat: f64::from(u8::from(cur.nlu_intent == next.nlu_intent)),
            present: 1.0,
        },
        _ => ParaphraseFeatures {
            syntactic_sim: 0.0,
            intent_repeat: 0.0,
            present: 0.0,
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageStat {
    pub count: u64,
    /// Distinct dialogues, standing in for distinct users.
    pub users: u64,
}

impl UsageStat {
    pub fn ratio(&self) -> f64 {
        if self.users == 0 {
            0.0
        } else {
            self.count as f64 / self.users as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopularityLookup {
    pub count: u64,
    pub ratio: f64,
    pub missing: bool,
}

/// Aggregate domain and intent usage over a training corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PopularityTable {
    pub domains: BTreeMap<String, UsageStat>,
    pub intents: BTreeMap<String, UsageStat>,
}

fn lookup(map: &BTreeMap<String, UsageStat>, key: &str) -> PopularityLookup {
    match map.get(key) {
        Some(s) => PopularityLookup {
            count: s.count,
            ratio: s.ratio(),
            missing: false,
        },
        None => PopularityLookup {
            count: 0,
            ratio: 0.0,
            missing: true,
        },
    }
}

impl PopularityTable {
    pub fn domain(&self, name: &str) -> PopularityLookup {
        lookup(&self.domains, name)
    }

    pub fn intent(&self, name: &str) -> PopularityLookup {
        lookup(&self.intents, name)
    }
}

pub fn build_popularity_table(train: &Corpus) -> Result<PopularityTable> {
    if train.is_empty() {
        return Err(Error::data("popularity table needs a non-empty training corpus"));
    }
    let mut domain_users: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut intent_users: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut table = PopularityTable::default();
    for (d, t) in train.turns() {
        table.domains.entry(t.nlu_domain.clone()).or_default().count += 1;
        table.intents.entry(t.nlu_intent.clone()).or_default().count += 1;
        domain_users
            .entry(&t.nlu_domain)
            .or_default()
            .insert(&d.dialogue_id);
        intent_users
            .entry(&t.nlu_intent)
            .or_default()
            .insert(&d.dialogue_id);
    }
    for (k, users) in domain_users {
        table.domains.get_mut(k).expect("counted").users = users.len() as u64;
    }
    for (k, users) in intent_users {
        table.intents.get_mut(k).expect("counted").users = users.len() as u64;
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopularityFeatures {
    pub domain_count_log1p: f64,
    pub domain_ratio: f64,
    pub intent_count_log1p: f64,
    pub intent_ratio: f64,
    pub domain_count_raw: f64,
    pub intent_count_raw: f64,
    pub domain_missing: f64,
    pub intent_missing: f64,
}

pub fn popularity_features(turn: &Turn, table: &PopularityTable) -> PopularityFeatures {
    let d = table.domain(&turn.nlu_domain);
    let i = table.intent(&turn.nlu_intent);
    PopularityFeatures {
        domain_count_log1p: (d.count as f64).ln_1p(),
        domain_ratio: d.ratio,
        intent_count_log1p: (i.count as f64).ln_1p(),
        intent_ratio: i.ratio,
        domain_count_raw: d.count as f64,
        intent_count_raw: i.count as f64,
        domain_missing: f64::from(u8::from(d.missing)),
        intent_missing: f64::from(u8::from(i.missing)),
    }
}

/// Apology and negation terms that together mark an un-actionable request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub apology: BTreeSet<String>,
    pub negation: BTreeSet<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Lexicon {
            apology: set(&["sorry", "apologies", "apologize"]),
            negation: set(&["don't", "dont", "can't", "cant", "cannot", "unable", "not", "no"]),
        }
    }
}

impl Lexicon {
    pub fn new(
        apology: impl IntoIterator<Item = String>,
        negation: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let norm = |xs: &mut dyn Iterator<Item = String>| -> BTreeSet<String> {
            xs.flat_map(|t| tokenize(&t)).collect()
        };
        let lex = Lexicon {
            apology: norm(&mut apology.into_iter()),
            negation: norm(&mut negation.into_iter()),
        };
        lex.validate()?;
        Ok(lex)
    }

    pub fn validate(&self) -> Result<()> {
        if self.apology.is_empty() || self.negation.is_empty() {
            return Err(Error::config(
                "lexicon needs non-empty apology and negation term sets",
            ));
        }
        Ok(())
    }

    /// Parse `apology = a, b` / `negation = c, d` lines. Unspecified keys keep
    /// their defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Lexicon::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("lexicon line {}: expected `key = terms`", i + 1))
            })?;
            let terms: BTreeSet<String> = value.split(',').flat_map(tokenize).collect();
            match key.trim() {
                "apology" => lex.apology = terms,
                "negation" => lex.negation = terms,
                other => {
                    return Err(Error::config(format!(
                        "lexicon line {}: unknown key `{other}`",
                        i + 1
                    )))
                }
            }
        }
        lex.validate()?;
        Ok(lex)
    }
}

pub fn unactionable_feature(system_text: &str, lexicon: &Lexicon) -> Result<f64> {
    lexicon.validate()?;
    let tokens = tokenize(system_text);
    let apology = tokens.iter().any(|t| lexicon.apology.contains(t));
    let negation = tokens.iter().any(|t| lexicon.negation.contains(t));
    Ok(f64::from(u8::from(apology && negation)))
}

/// Fraction of distinct intents among turns `1..=n`.
pub fn topic_diversity(dialogue: &Dialogue, n: usize) -> f64 {
    let n = n.clamp(1, dialogue.len().max(1));
    let unique: BTreeSet<&str> = dialogue
        .turns
        .iter()
        .take(n)
        .map(|t| t.nlu_intent.as_str())
        .collect();
    unique.len() as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseFeatures {
    pub asr_confidence: f64,
    pub nlu_confidence: f64,
    pub user_len_tokens: f64,
    pub system_len_tokens: f64,
    pub inter_request_gap_s: f64,
    pub gap_present: f64,
    pub dialogue_len_so_far: f64,
}

pub fn base_features(dialogue: &Dialogue, n: usize) -> Result<BaseFeatures> {
    let turn = dialogue.turn(n).ok_or_else(|| {
        Error::data(format!(
            "dialogue `{}` has no turn {n}",
            dialogue.dialogue_id
        ))
    })?;
    let (gap, present) = match dialogue.turn(n + 1) {
        Some(next) => {
            let gap = next.timestamp_s - turn.timestamp_s;
            if gap < 0.0 {
                return Err(Error::data(format!(
                    "dialogue `{}` turn {n}: negative inter-request gap {gap}",
                    dialogue.dialogue_id
                )));
            }
            (gap, 1.0)
        }
        None => (0.0, 0.0),
    };
    Ok(BaseFeatures {
        asr_confidence: turn.asr_confidence,
        nlu_confidence: turn.nlu_confidence,
        user_len_tokens: tokenize(&turn.user_text).len() as f64,
        system_len_tokens: tokenize(&turn.system_text).len() as f64,
        inter_request_gap_s: gap,
        gap_present: present,
        dialogue_len_so_far: n as f64,
    })
}

/// Features of one turn, ready for training or scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: f64,
    pub segment: Segment,
    pub dialogue_id: String,
    pub turn_index: u32,
}

/// Every catalog column for turn `n`, in catalog order.
fn catalog_row(
    dialogue: &Dialogue,
    n: usize,
    table: &PopularityTable,
    lexicon: &Lexicon,
) -> Result<Vec<f64>> {
    let turn = dialogue.turn(n).expect("caller iterates existing turns");
    let base = base_features(dialogue, n)?;
    let para = paraphrase_features(dialogue, n);
    let pop = popularity_features(turn, table);
    Ok(vec![
        base.asr_confidence,
        base.nlu_confidence,
        base.user_len_tokens,
        base.system_len_tokens,
        base.inter_request_gap_s,
        base.gap_present,
        base.dialogue_len_so_far,
        para.syntactic_sim,
        para.intent_repeat,
        para.present,
        cohesion_feature(turn),
        pop.domain_count_log1p,
        pop.domain_ratio,
        pop.intent_count_log1p,
        pop.intent_ratio,
        pop.domain_count_raw,
        pop.intent_count_raw,
        pop.domain_missing,
        pop.intent_missing,
        unactionable_feature(&turn.system_text, lexicon)?,
        topic_diversity(dialogue, n),
    ])
}

/// One vector per turn, in corpus order.
pub fn featurize_corpus(
    corpus: &Corpus,
    table: &PopularityTable,
    schema: &FeatureSchema,
    lexicon: &Lexicon,
) -> Result<Vec<FeatureVector>> {
    schema.validate()?;
    lexicon.validate()?;
    let cols = schema.catalog_indices();
    let per_dialogue: Vec<Result<Vec<FeatureVector>>> = corpus
        .dialogues
        .par_iter()
        .map(|d| {
            d.turns
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let n = i + 1;
                    let label = t.label().map_err(|_| Error::Unlabeled {
                        dialogue_id: d.dialogue_id.clone(),
                        index: t.index,
                    })?;
                    let row = catalog_row(d, n, table, lexicon)?;
                    Ok(FeatureVector {
                        values: cols.iter().map(|&c| row[c]).collect(),
                        label,
                        segment: d.segment,
                        dialogue_id: d.dialogue_id.clone(),
                        turn_index: t.index,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(corpus.turn_count());
    for r in per_dialogue {
        out.extend(r?);
    }
    Ok(out)
}

/// Feature matrix CSV: feature columns then `label,segment,dialogue_id,turn_index`.
pub fn feature_csv(schema: &FeatureSchema, rows: &[FeatureVector]) -> String {
    let mut out = schema.names().join(",");
    out.push_str(",label,segment,dialogue_id,turn_index\n");
    for r in rows {
        for v in &r.values {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.label, r.segment, r.dialogue_id, r.turn_index
        ));
    }
    out
}

/// Per-column z-scoring with statistics from the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Zero-variance columns keep sd = 1; indicator columns are left as is.
    pub fn fit(rows: &[Vec<f64>], indicator: &[bool]) -> Result<Self> {
        let p = indicator.len();
        if rows.is_empty() {
            return Err(Error::data("cannot standardize with no training rows"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; p];
        let mut sd = vec![1.0; p];
        for j in 0..p {
            if indicator[j] {
                continue;
            }
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            if s > 1e-12 {
                mean[j] = m;
                sd[j] = s;
            }
        }
        Ok(Standardizer { mean, sd })
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }
}

/// Fit on `train`, then transform both sets with the training statistics.
pub fn standardize(
    train: &[Vec<f64>],
    apply_to: &[Vec<f64>],
    indicator: &[bool],
) -> Result<(Vec<Vec<f64>>, Standardizer)> {
    let s = Standardizer::fit(train, indicator)?;
    Ok((s.apply(apply_to), s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::{dialogue, turn};

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Play latest hits."), ["play", "latest", "hits"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("sci-fi movie"), ["sci-fi", "movie"]);
        assert_eq!(tokenize("  \"Sorry,\"  I  don’t ... "), ["sorry", "i", "don't"]);
    }

    #[test]
    fn jaccard_examples() {
        let t = |s: &str| tokenize(s);
        assert_eq!(jaccard(&t("a b c"), &t("c b a")), 1.0);
        let scifi = jaccard(&t("recommend a sci-fi movie"), &t("here is a sci-fi movie"));
        assert_eq!(scifi, 3.0 / 6.0);
        let comedy = jaccard(&t("recommend a sci-fi movie"), &t("here is a comedy movie"));
        assert_eq!(comedy, 2.0 / 7.0);
        assert!(comedy < scifi);
        assert_eq!(jaccard::<String>(&[], &[]), 0.0);
    }

    #[test]
    fn cohesion_examples() {
        let mut tr = turn(1, "play jazz", "", "PlayMusic", &[4]);
        assert_eq!(cohesion_feature(&tr), 0.0);
        tr.system_text = "playing jazz for you".into();
        assert_eq!(cohesion_feature(&tr), 1.0 / 5.0);
        tr.system_text = "Play jazz".into();
        assert_eq!(cohesion_feature(&tr), 1.0);
    }

    #[test]
    fn paraphrase_examples() {
        let d = dialogue(
            "d",
            crate::corpus::Segment::MultiTurn,
            vec![
                turn(1, "cancel my evening appointment", "Sorry I don't know that one", "CancelEvent", &[1]),
                turn(2, "cancel my 7pm event if it is raining today", "ok", "CancelEvent", &[4]),
                turn(3, "yes please", "done", "Confirm", &[5]),
            ],
        );
        let p = paraphrase_features(&d, 1);
        // {cancel, my} shared out of 4 + 9 - 2 = 11 distinct tokens.
        assert_eq!(p.syntactic_sim, 2.0 / 11.0);
        assert_eq!(p.intent_repeat, 1.0);
        assert_eq!(p.present, 1.0);
        assert_eq!(paraphrase_features(&d, 2).intent_repeat, 0.0);
        let last = paraphrase_features(&d, 3);
        assert_eq!((last.syntactic_sim, last.intent_repeat, last.present), (0.0, 0.0, 0.0));

        let same = dialogue(
            "s",
            crate::corpus::Segment::MultiTurn,
            vec![
                turn(1, "play jazz", "", "PlayMusic", &[1]),
                turn(2, "play jazz", "", "PlayMusic", &[1]),
            ],
        );
        let p = paraphrase_features(&same, 1);
        assert_eq!((p.syntactic_sim, p.intent_repeat, p.present), (1.0, 1.0, 1.0));
    }

    #[test]
    fn popularity_examples() {
        let c = Corpus::new(vec![
            dialogue(
                "a",
                crate::corpus::Segment::MultiTurn,
                vec![
                    turn(1, "play", "", "PlayMusic", &[4]),
                    turn(2, "play", "", "PlayMusic", &[4]),
                ],
            ),
            dialogue(
                "b",
                crate::corpus::Segment::SingleTurn,
                vec![turn(1, "play", "", "PlayMusic", &[4])],
            ),
        ]);
        let t = build_popularity_table(&c).unwrap();
        let i = t.intent("PlayMusic");
        assert_eq!((i.count, i.ratio, i.missing), (3, 1.5, false));
        let u = t.intent("Unseen");
        assert_eq!((u.count, u.ratio, u.missing), (0, 0.0, true));

        let single = Corpus::new(vec![c.dialogues[0].clone()]);
        let t1 = build_popularity_table(&single).unwrap();
        for s in t1.intents.values().chain(t1.domains.values()) {
            assert_eq!(s.ratio(), s.count as f64);
        }
        assert!(build_popularity_table(&Corpus::default()).is_err());

        let f = popularity_features(&c.dialogues[0].turns[0], &t);
        assert!((f.intent_count_log1p - 1.3862943611198906).abs() < 1e-12);
        assert_eq!(f.intent_count_raw, 3.0);
        let mut unseen = c.dialogues[0].turns[0].clone();
        unseen.nlu_domain = "BrandNew".into();
        unseen.nlu_intent = "BrandNewIntent".into();
        let f = popularity_features(&unseen, &t);
        assert_eq!(f.domain_count_log1p, 0.0);
        assert_eq!(f.intent_ratio, 0.0);
        assert_eq!((f.domain_missing, f.intent_missing), (1.0, 1.0));
    }

    #[test]
    fn unactionable_examples() {
        let lex = Lexicon::default();
        assert_eq!(unactionable_feature("Sorry I don't know that one", &lex).unwrap(), 1.0);
        assert_eq!(unactionable_feature("sorry I don't know how to do that", &lex).unwrap(), 1.0);
        assert_eq!(unactionable_feature("Shuffling from your playlist.", &lex).unwrap(), 0.0);
        assert_eq!(unactionable_feature("Sorry, here it is", &lex).unwrap(), 0.0);
        let empty = Lexicon {
            apology: BTreeSet::new(),
            negation: lex.negation.clone(),
        };
        assert!(unactionable_feature("sorry no", &empty).is_err());
    }

    #[test]
    fn lexicon_file_parsing() {
        let lex = Lexicon::parse("# custom\napology = Sorry, regret\nnegation = never\n").unwrap();
        assert!(lex.apology.contains("regret"));
        assert_eq!(unactionable_feature("I regret I can never", &lex).unwrap(), 1.0);
        assert_eq!(unactionable_feature("sorry I can't", &lex).unwrap(), 0.0);
        assert!(Lexicon::parse("apology =\n").is_err());
        assert!(Lexicon::parse("mood = sad").is_err());
    }

    #[test]
    fn diversity_examples() {
        let d = dialogue(
            "d",
            crate::corpus::Segment::MultiTurn,
            vec![
                turn(1, "x", "", "PlayMusic", &[4]),
                turn(2, "x", "", "PlayMusic", &[4]),
                turn(3, "x", "", "CancelEvent", &[4]),
            ],
        );
        assert_eq!(topic_diversity(&d, 1), 1.0);
        assert_eq!(topic_diversity(&d, 3), 2.0 / 3.0);
    }

    #[test]
    fn base_feature_examples() {
        let single = dialogue(
            "s",
            crate::corpus::Segment::SingleTurn,
            vec![turn(1, "play latest hits.", "ok", "PlayMusic", &[4])],
        );
        let b = base_features(&single, 1).unwrap();
        assert_eq!(b.gap_present, 0.0);
        assert_eq!(b.dialogue_len_so_far, 1.0);
        assert_eq!(b.user_len_tokens, 3.0);

        let mut two = dialogue(
            "m",
            crate::corpus::Segment::MultiTurn,
            vec![turn(1, "a", "b", "I", &[4]), turn(2, "c", "d", "I", &[4])],
        );
        two.turns[0].timestamp_s = 0.0;
        two.turns[1].timestamp_s = 12.5;
        assert_eq!(base_features(&two, 1).unwrap().inter_request_gap_s, 12.5);
        two.turns[1].timestamp_s = -1.0;
        assert!(base_features(&two, 1).is_err());
    }

    #[test]
    fn featurize_shapes_and_purity() {
        let d = dialogue(
            "m",
            crate::corpus::Segment::MultiTurn,
            vec![turn(1, "a", "b", "I", &[4]), turn(2, "c", "d", "I", &[2])],
        );
        let c = Corpus::new(vec![d]);
        let table = build_popularity_table(&c).unwrap();
        let schema = FeatureSchema::full();
        let lex = Lexicon::default();
        let a = featurize_corpus(&c, &table, &schema, &lex).unwrap();
        let b = featurize_corpus(&c, &table, &schema, &lex).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.values.len() == schema.len()));
        assert!(a.iter().all(|v| v.values.iter().all(|x| x.is_finite())));
        let csv = feature_csv(&schema, &a);
        assert!(csv.lines().next().unwrap().ends_with("label,segment,dialogue_id,turn_index"));
    }

    #[test]
    fn schema_accounting() {
        let full = FeatureSchema::full();
        for set in FeatureSet::NEW {
            let reduced = full.without(set).unwrap();
            assert_eq!(full.len() - reduced.len(), full.count_in(set));
            assert_ne!(full.fingerprint(), reduced.fingerprint());
            assert!(reduced.without(set).is_err());
        }
        assert_eq!(full.sets().len(), 9);
    }

    #[test]
    fn standardize_examples() {
        let train = vec![vec![1.0, 5.0, 0.0], vec![3.0, 5.0, 1.0]];
        let mask = [false, false, true];
        let (out, s) = standardize(&train, &[vec![3.0, 5.0, 1.0]], &mask).unwrap();
        assert_eq!(s.mean[0], 2.0);
        assert_eq!(s.sd[0], 1.0);
        assert_eq!(out[0], vec![1.0, 5.0, 1.0]);
        // Test rows use training statistics, not their own.
        let far = s.apply_row(&[102.0, 7.0, 0.0]);
        assert_eq!(far[0], 100.0);
        assert_eq!(far[1], 7.0);
    }
}
