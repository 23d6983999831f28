//! Dialogue corpus data model, JSONL I/O, label aggregation and splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Ratings below this value are dissatisfactory.
pub const SATISFACTION_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    SingleTurn,
    MultiTurn,
    NewSkill,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::SingleTurn, Segment::MultiTurn, Segment::NewSkill];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::SingleTurn => "single_turn",
            Segment::MultiTurn => "multi_turn",
            Segment::NewSkill => "new_skill",
        }
    }

    /// Column suffix used in report tables.
    pub fn short(self) -> &'static str {
        match self {
            Segment::SingleTurn => "s",
            Segment::MultiTurn => "m.t",
            Segment::NewSkill => "n.s",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_turn" => Ok(Segment::SingleTurn),
            "multi_turn" => Ok(Segment::MultiTurn),
            "new_skill" => Ok(Segment::NewSkill),
            other => Err(Error::data(format!("unknown segment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorRating {
    pub annotator_id: String,
    pub rating: u8,
}

/// One user request / system response exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: u32,
    pub user_text: String,
    pub system_text: String,
    pub timestamp_s: f64,
    pub asr_confidence: f64,
    pub nlu_intent: String,
    pub nlu_confidence: f64,
    pub nlu_domain: String,
    pub annotations: Vec<AnnotatorRating>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_rating: Option<u8>,
}

impl Turn {
    /// Mean annotator rating.
    pub fn label(&self) -> Result<f64> {
        aggregate_label(&self.annotations)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub segment: Segment,
    pub domain: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Number of turns `N`.
    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Turn `n` (1-based).
    pub fn turn(&self, n: usize) -> Option<&Turn> {
        n.checked_sub(1).and_then(|i| self.turns.get(i))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Error::Invariant {
            dialogue_id: self.dialogue_id.clone(),
            field: field.to_string(),
            message,
        };
        if self.turns.is_empty() {
            return Err(bad("turns", "dialogue has no turns".into()));
        }
        if self.segment == Segment::SingleTurn && self.turns.len() != 1 {
            return Err(bad(
                "segment",
                format!("single_turn dialogue has {} turns", self.turns.len()),
            ));
        }
        let mut prev_ts = 0.0_f64;
        for (i, t) in self.turns.iter().enumerate() {
            let n = i as u32 + 1;
            if t.index != n {
                return Err(bad(
                    "turns.index",
                    format!("expected index {n}, found {}", t.index),
                ));
            }
            let at = |field: &str, msg: String| bad(&format!("turns[{n}].{field}"), msg);
            if t.user_text.trim().is_empty() {
                return Err(at("user_text", "must be non-empty".into()));
            }
            if !(0.0..=1.0).contains(&t.asr_confidence) {
                return Err(at("asr_confidence", format!("{} not in [0,1]", t.asr_confidence)));
            }
            if !(0.0..=1.0).contains(&t.nlu_confidence) {
                return Err(at("nlu_confidence", format!("{} not in [0,1]", t.nlu_confidence)));
            }
            if !t.timestamp_s.is_finite() || t.timestamp_s < 0.0 {
                return Err(at("timestamp_s", format!("{} must be >= 0", t.timestamp_s)));
            }
            if t.timestamp_s < prev_ts {
                return Err(at(
                    "timestamp_s",
                    format!("{} decreases from previous turn ({prev_ts})", t.timestamp_s),
                ));
            }
            prev_ts = t.timestamp_s;
            if t.annotations.is_empty() {
                return Err(Error::Unlabeled {
                    dialogue_id: self.dialogue_id.clone(),
                    index: n,
                });
            }
            for a in &t.annotations {
                if !(1..=5).contains(&a.rating) {
                    return Err(at(
                        "annotations.rating",
                        format!("rating {} from `{}` not in 1..=5", a.rating, a.annotator_id),
                    ));
                }
            }
            if let Some(r) = t.user_rating {
                if !(1..=5).contains(&r) {
                    return Err(at("user_rating", format!("{r} not in 1..=5")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    pub metadata: BTreeMap<String, String>,
}

impl Corpus {
    pub fn new(dialogues: Vec<Dialogue>) -> Self {
        Corpus {
            dialogues,
            metadata: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn turn_count(&self) -> usize {
        self.dialogues.iter().map(Dialogue::len).sum()
    }

    pub fn turns(&self) -> impl Iterator<Item = (&Dialogue, &Turn)> {
        self.dialogues
            .iter()
            .flat_map(|d| d.turns.iter().map(move |t| (d, t)))
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.dialogues.iter().map(|d| d.dialogue_id.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for d in &self.dialogues {
            if !seen.insert(d.dialogue_id.as_str()) {
                return Err(Error::Invariant {
                    dialogue_id: d.dialogue_id.clone(),
                    field: "dialogue_id".into(),
                    message: "duplicate dialogue_id".into(),
                });
            }
            d.validate()?;
        }
        Ok(())
    }

    fn subset<'a>(&self, ds: impl IntoIterator<Item = &'a Dialogue>, part: &str) -> Corpus {
        let mut metadata = self.metadata.clone();
        metadata.insert("split".into(), part.into());
        Corpus {
            dialogues: ds.into_iter().cloned().collect(),
            metadata,
        }
    }
}

const DIALOGUE_FIELDS: &[&str] = &["dialogue_id", "segment", "domain", "turns"];
const TURN_FIELDS: &[&str] = &[
    "index",
    "user_text",
    "system_text",
    "timestamp_s",
    "asr_confidence",
    "nlu_intent",
    "nlu_confidence",
    "nlu_domain",
    "annotations",
    "user_rating",
];
const ANNOTATION_FIELDS: &[&str] = &["annotator_id", "rating"];

fn warn_unknown(obj: &serde_json::Value, known: &[&str], what: &str, line: usize) {
    if let Some(map) = obj.as_object() {
        for key in map.keys() {
            if !known.contains(&key.as_str()) {
                warn!("line {line}: ignoring unknown {what} field `{key}`");
            }
        }
    }
}

/// Parse one JSONL dialogue record without validating invariants.
fn parse_record(text: &str, line: usize) -> Result<Dialogue> {
    let parse_err = |e: serde_json::Error| Error::Parse {
        line,
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
    warn_unknown(&value, DIALOGUE_FIELDS, "dialogue", line);
    if let Some(turns) = value.get("turns").and_then(|t| t.as_array()) {
        for t in turns {
            warn_unknown(t, TURN_FIELDS, "turn", line);
            if let Some(anns) = t.get("annotations").and_then(|a| a.as_array()) {
                for a in anns {
                    warn_unknown(a, ANNOTATION_FIELDS, "annotation", line);
                }
            }
        }
    }
    serde_json::from_value(value).map_err(parse_err)
}

/// Read and validate a corpus from JSONL text.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut dialogues = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d = parse_record(&line, line_no)?;
        d.validate().map_err(|e| match e {
            Error::Invariant { .. } | Error::Unlabeled { .. } => Error::Parse {
                line: line_no,
                message: e.to_string(),
            },
            other => other,
        })?;
        dialogues.push(d);
    }
    if dialogues.is_empty() {
        warn!("corpus is empty");
    }
    let corpus = Corpus::new(dialogues);
    corpus.validate()?;
    Ok(corpus)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut corpus = read_corpus(BufReader::new(file))?;
    corpus
        .metadata
        .insert("source".into(), path.display().to_string());
    Ok(corpus)
}

/// Write one dialogue per line.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    for d in &corpus.dialogues {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_corpus(corpus, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Mean of the annotator ratings.
pub fn aggregate_label(annotations: &[AnnotatorRating]) -> Result<f64> {
    if annotations.is_empty() {
        return Err(Error::data("cannot aggregate an empty annotation list"));
    }
    let sum: u32 = annotations.iter().map(|a| a.rating as u32).sum();
    Ok(sum as f64 / annotations.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Satisfaction {
    Satisfactory,
    Dissatisfactory,
}

pub fn binarize(rating: f64) -> Result<Satisfaction> {
    if !(1.0..=5.0).contains(&rating) {
        return Err(Error::data(format!("rating {rating} outside [1,5]")));
    }
    Ok(if rating >= SATISFACTION_THRESHOLD {
        Satisfaction::Satisfactory
    } else {
        Satisfaction::Dissatisfactory
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Corpus,
    pub test: Corpus,
    /// New-skill dialogues only.
    pub holdout: Corpus,
}

/// Partition at dialogue granularity, stratified by segment.
///
/// New-skill dialogues always go to the holdout. The test size is
/// `round(total * test_fraction)` over the remaining dialogues, apportioned
/// across segments by largest remainder.
pub fn split_corpus(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<DataSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!(
            "test_fraction {test_fraction} must lie in (0,1)"
        )));
    }
    if corpus.is_empty() {
        return Err(Error::data("cannot split an empty corpus"));
    }
    let mut strata: BTreeMap<Segment, Vec<&Dialogue>> = BTreeMap::new();
    let mut holdout = Vec::new();
    for d in &corpus.dialogues {
        if d.segment == Segment::NewSkill {
            holdout.push(d);
        } else {
            strata.entry(d.segment).or_default().push(d);
        }
    }
    let total: usize = strata.values().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::data(
            "corpus contains only new_skill dialogues; nothing to train on",
        ));
    }

    let target = (total as f64 * test_fraction).round() as usize;
    let mut alloc: Vec<(Segment, usize, f64)> = strata
        .iter()
        .map(|(s, ds)| {
            let exact = ds.len() as f64 * test_fraction;
            (*s, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut remaining = target.saturating_sub(alloc.iter().map(|a| a.1).sum());
    let mut order: Vec<usize> = (0..alloc.len()).collect();
    order.sort_by(|&a, &b| alloc[b].2.total_cmp(&alloc[a].2).then(a.cmp(&b)));
    for i in order {
        if remaining == 0 {
            break;
        }
        if alloc[i].1 < strata[&alloc[i].0].len() {
            alloc[i].1 += 1;
            remaining -= 1;
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (segment, n_test, _) in alloc {
        let mut ds = strata[&segment].clone();
        let mut rng = rng_from(seed, segment as u64);
        ds.shuffle(&mut rng);
        let (t, tr) = ds.split_at(n_test);
        test.extend_from_slice(t);
        train.extend_from_slice(tr);
    }
    // Restore corpus order inside each part so downstream output is stable.
    let pos: BTreeMap<&str, usize> = corpus
        .dialogues
        .iter()
        .enumerate()
        .map(|(i, d)| (d.dialogue_id.as_str(), i))
        .collect();
    train.sort_by_key(|d| pos[d.dialogue_id.as_str()]);
    test.sort_by_key(|d| pos[d.dialogue_id.as_str()]);

    Ok(DataSplit {
        train: corpus.subset(train, "train"),
        test: corpus.subset(test, "test"),
        holdout: corpus.subset(holdout, "holdout"),
    })
}

/// Round half-up into the 1..=5 rating bins.
pub fn rating_bin(label: f64) -> u8 {
    ((label + 0.5).floor() as i64).clamp(1, 5) as u8
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SegmentHistogram {
    pub dialogues: usize,
    pub turns: usize,
    /// Counts for bins 1..=5.
    pub counts: [usize; 5],
    pub percent: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub segments: BTreeMap<Segment, SegmentHistogram>,
}

impl CorpusStats {
    /// `segment,bin,count,percent` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("segment,bin,count,percent\n");
        for (seg, h) in &self.segments {
            if h.turns == 0 {
                continue;
            }
            for b in 0..5 {
                out.push_str(&format!(
                    "{},{},{},{:.4}\n",
                    seg,
                    b + 1,
                    h.counts[b],
                    h.percent[b]
                ));
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (seg, h) in &self.segments {
            out.push_str(&format!(
                "{:<12} dialogues={:<6} turns={:<6}",
                seg.as_str(),
                h.dialogues,
                h.turns
            ));
            for b in 0..5 {
                out.push_str(&format!("  {}:{:5.1}%", b + 1, h.percent[b]));
            }
            out.push('\n');
        }
        out
    }
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    let mut segments: BTreeMap<Segment, SegmentHistogram> = Segment::ALL
        .iter()
        .map(|s| (*s, SegmentHistogram::default()))
        .collect();
    for d in &corpus.dialogues {
        let h = segments.get_mut(&d.segment).expect("all segments present");
        h.dialogues += 1;
        for t in &d.turns {
            let label = t.label().map_err(|_| Error::Unlabeled {
                dialogue_id: d.dialogue_id.clone(),
                index: t.index,
            })?;
            h.turns += 1;
            h.counts[rating_bin(label) as usize - 1] += 1;
        }
    }
    for h in segments.values_mut() {
        if h.turns > 0 {
            for b in 0..5 {
                h.percent[b] = 100.0 * h.counts[b] as f64 / h.turns as f64;
            }
        }
    }
    Ok(CorpusStats { segments })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn turn(index: u32, user: &str, system: &str, intent: &str, ratings: &[u8]) -> Turn {
        Turn {
            index,
            user_text: user.into(),
            system_text: system.into(),
            timestamp_s: (index - 1) as f64 * 10.0,
            asr_confidence: 0.9,
            nlu_intent: intent.into(),
            nlu_confidence: 0.8,
            nlu_domain: "Music".into(),
            annotations: ratings
                .iter()
                .enumerate()
                .map(|(i, r)| AnnotatorRating {
                    annotator_id: format!("a{i}"),
                    rating: *r,
                })
                .collect(),
            user_rating: None,
        }
    }

    pub fn dialogue(id: &str, segment: Segment, turns: Vec<Turn>) -> Dialogue {
        Dialogue {
            dialogue_id: id.into(),
            segment,
            domain: "Music".into(),
            turns,
        }
    }
}
