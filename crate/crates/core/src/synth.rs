//! Synthetic annotated corpora with a planted satisfaction signal.
//!
//! Each turn gets a latent quality `q` in [1,5] determined by the defect
//! applied to it. Defects leave traces the feature extractor can see:
//! apology phrasing, responses from the wrong domain, paraphrased follow-up
//! requests, lower SLU confidence, and a higher defect rate on rarely used
//! intents. Partial fulfilment looks exactly like a clean answer.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatorRating, Corpus, Dialogue, Segment, Turn};
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Noise of simulated explicit user ratings around the latent quality.
pub const USER_NOISE_SD: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    Unactionable,
    Misunderstanding,
    Partial,
}

impl Defect {
    /// Latent quality bands for a turn carrying this defect, one chosen
    /// uniformly. Bands sit just inside the rating anchors so that small
    /// annotator noise rarely crosses a rounding boundary.
    pub fn quality_bands(self) -> &'static [(f64, f64)] {
        match self {
            // understands the goal but cannot satisfy it
            Defect::Unactionable => &[(1.8, 2.0)],
            // fails to understand the goal
            Defect::Misunderstanding => &[(1.0, 1.2)],
            // partly or mostly satisfies the goal
            Defect::Partial => &[(2.8, 3.2), (3.8, 4.0)],
        }
    }

    /// Envelope of [`Defect::quality_bands`].
    pub fn quality_range(self) -> (f64, f64) {
        let b = self.quality_bands();
        (b[0].0, b[b.len() - 1].1)
    }
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Defect::Unactionable => "unactionable",
            Defect::Misunderstanding => "misunderstanding",
            Defect::Partial => "partial",
        })
    }
}

impl FromStr for Defect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unactionable" => Ok(Defect::Unactionable),
            "misunderstanding" => Ok(Defect::Misunderstanding),
            "partial" => Ok(Defect::Partial),
            _ => Err(Error::config(format!("unknown defect `{s}`"))),
        }
    }
}

/// Quality range of a defect-free turn.
pub const CLEAN_QUALITY: (f64, f64) = (4.8, 5.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_dialogues: usize,
    pub single_turn_fraction: f64,
    pub new_skill_fraction: f64,
    pub n_domains: usize,
    pub intents_per_domain: usize,
    pub annotators: usize,
    pub annotator_noise_sd: f64,
    pub defect_rates: BTreeMap<Defect, f64>,
    /// Fraction of intents (least popular first) with elevated defect rates.
    pub tail_fraction: f64,
    /// Multiplier on misunderstanding/partial rates for tail intents.
    pub tail_defect_multiplier: f64,
    /// Zipf exponent of intent usage.
    pub zipf_exponent: f64,
    /// Probability that a dissatisfying turn is followed by a paraphrase.
    pub paraphrase_prob: f64,
    /// Fraction of turns carrying an explicit user rating.
    pub user_rating_fraction: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_dialogues: 1000,
            single_turn_fraction: 0.9,
            new_skill_fraction: 0.002,
            n_domains: 26,
            intents_per_domain: 6,
            annotators: 3,
            annotator_noise_sd: 0.35,
            defect_rates: [
                (Defect::Unactionable, 0.08),
                (Defect::Misunderstanding, 0.08),
                (Defect::Partial, 0.08),
            ]
            .into_iter()
            .collect(),
            tail_fraction: 0.3,
            tail_defect_multiplier: 4.0,
            zipf_exponent: 1.0,
            paraphrase_prob: 0.7,
            user_rating_fraction: 0.1,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// Most dissatisfaction comes from partial fulfilment of tail intents,
    /// which only the popularity features can anticipate.
    pub fn popularity_dominant() -> Self {
        GeneratorConfig {
            defect_rates: [
                (Defect::Unactionable, 0.02),
                (Defect::Misunderstanding, 0.02),
                (Defect::Partial, 0.08),
            ]
            .into_iter()
            .collect(),
            tail_fraction: 0.5,
            tail_defect_multiplier: 8.0,
            zipf_exponent: 0.5,
            ..Default::default()
        }
    }

    /// Goal-driven study sessions: defects are common and spread evenly,
    /// and every turn carries an explicit user rating.
    pub fn user_study() -> Self {
        GeneratorConfig {
            defect_rates: [
                (Defect::Unactionable, 0.15),
                (Defect::Misunderstanding, 0.15),
                (Defect::Partial, 0.3),
            ]
            .into_iter()
            .collect(),
            tail_defect_multiplier: 1.0,
            user_rating_fraction: 1.0,
            ..Default::default()
        }
    }

    pub fn rate(&self, d: Defect) -> f64 {
        self.defect_rates.get(&d).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} = {v} must lie in [0,1]")))
            }
        };
        if self.n_dialogues == 0 {
            return Err(Error::config("n_dialogues must be positive"));
        }
        frac("single_turn_fraction", self.single_turn_fraction)?;
        frac("new_skill_fraction", self.new_skill_fraction)?;
        if self.single_turn_fraction + self.new_skill_fraction > 1.0 + 1e-12 {
            return Err(Error::config("segment fractions sum to more than 1"));
        }
        frac("tail_fraction", self.tail_fraction)?;
        frac("paraphrase_prob", self.paraphrase_prob)?;
        frac("user_rating_fraction", self.user_rating_fraction)?;
        for (d, p) in &self.defect_rates {
            frac(&format!("defect_rates.{d}"), *p)?;
        }
        if self.defect_rates.values().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::config("defect rates sum to more than 1"));
        }
        if self.n_domains == 0 || self.intents_per_domain == 0 {
            return Err(Error::config("need at least one domain and one intent"));
        }
        if self.annotators == 0 {
            return Err(Error::config("need at least one annotator"));
        }
        if !(self.annotator_noise_sd >= 0.0 && self.annotator_noise_sd.is_finite()) {
            return Err(Error::config("annotator_noise_sd must be finite and >= 0"));
        }
        if !(self.tail_defect_multiplier >= 0.0) || !(self.zipf_exponent >= 0.0) {
            return Err(Error::config(
                "tail_defect_multiplier and zipf_exponent must be >= 0",
            ));
        }
        Ok(())
    }

    /// Apply one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("`{key}`: `{v}` is not a number")))
        };
        let int = |v: &str| -> Result<u64> {
            v.trim()
                .parse::<u64>()
                .map_err(|_| Error::config(format!("`{key}`: `{v}` is not an integer")))
        };
        match key {
            "n_dialogues" => self.n_dialogues = int(value)? as usize,
            "single_turn_fraction" => self.single_turn_fraction = num(value)?,
            "new_skill_fraction" => self.new_skill_fraction = num(value)?,
            "n_domains" => self.n_domains = int(value)? as usize,
            "intents_per_domain" => self.intents_per_domain = int(value)? as usize,
            "annotators" => self.annotators = int(value)? as usize,
            "annotator_noise_sd" => self.annotator_noise_sd = num(value)?,
            "tail_fraction" => self.tail_fraction = num(value)?,
            "tail_defect_multiplier" => self.tail_defect_multiplier = num(value)?,
            "zipf_exponent" => self.zipf_exponent = num(value)?,
            "paraphrase_prob" => self.paraphrase_prob = num(value)?,
            "user_rating_fraction" => self.user_rating_fraction = num(value)?,
            "seed" => self.seed = int(value)?,
            k => match k.strip_prefix("defect_rates.") {
                Some(d) => {
                    self.defect_rates.insert(d.parse()?, num(value)?);
                }
                None => return Err(Error::config(format!("unknown generator key `{k}`"))),
            },
        }
        Ok(())
    }
}

/// Ground truth for one generated turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentQuality {
    pub dialogue_id: String,
    pub index: u32,
    pub q: f64,
    pub defects: Vec<Defect>,
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

fn noisy_rating(q: f64, sd: f64, rng: &mut ChaCha8Rng) -> u8 {
    let noise = if sd > 0.0 {
        Normal::new(0.0, sd).expect("sd validated").sample(rng)
    } else {
        0.0
    };
    round_half_up(q + noise).clamp(1.0, 5.0) as u8
}

/// One rating per annotator: `clamp(round(q + noise), 1, 5)`.
pub fn simulate_annotations(
    q: f64,
    config: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<AnnotatorRating> {
    (1..=config.annotators)
        .map(|k| AnnotatorRating {
            annotator_id: format!("ann{k}"),
            rating: noisy_rating(q, config.annotator_noise_sd, rng),
        })
        .collect()
}

/// Explicit survey rating with the calibrated user noise.
pub fn simulate_user_rating(q: f64, rng: &mut ChaCha8Rng) -> u8 {
    noisy_rating(q, USER_NOISE_SD, rng)
}

const DOMAIN_NAMES: &[(&str, [&str; 4])] = &[
    ("Music", ["jazz", "playlist", "album", "song"]),
    ("Calendar", ["meeting", "appointment", "event", "schedule"]),
    ("Weather", ["forecast", "rain", "temperature", "wind"]),
    ("Movies", ["comedy", "thriller", "showtime", "cinema"]),
    ("Shopping", ["cart", "order", "batteries", "groceries"]),
    ("Timers", ["timer", "countdown", "minutes", "kitchen"]),
    ("Alarms", ["alarm", "wakeup", "snooze", "morning"]),
    ("News", ["headlines", "briefing", "politics", "stories"]),
    ("Sports", ["score", "match", "league", "team"]),
    ("Recipes", ["recipe", "pasta", "ingredients", "dinner"]),
    ("Traffic", ["commute", "route", "highway", "delays"]),
    ("SmartHome", ["lights", "thermostat", "plug", "bedroom"]),
    ("Reminders", ["reminder", "task", "errand", "deadline"]),
    ("Books", ["audiobook", "chapter", "novel", "author"]),
    ("Podcasts", ["podcast", "episode", "series", "host"]),
    ("Radio", ["station", "broadcast", "frequency", "channel"]),
    ("Restaurants", ["restaurant", "table", "reservation", "sushi"]),
    ("Rides", ["taxi", "pickup", "driver", "fare"]),
    ("Flights", ["flight", "boarding", "gate", "airline"]),
    ("Hotels", ["hotel", "room", "checkin", "suite"]),
    ("Finance", ["balance", "stocks", "budget", "payment"]),
    ("Health", ["steps", "workout", "sleep", "heartrate"]),
    ("Trivia", ["question", "quiz", "fact", "answer"]),
    ("Translation", ["phrase", "spanish", "word", "language"]),
    ("Notes", ["note", "memo", "list", "draft"]),
    ("Video", ["trailer", "clip", "show", "screen"]),
];

const VERBS: &[(&str, &str)] = &[
    ("play", "playing"),
    ("find", "finding"),
    ("set", "setting"),
    ("cancel", "cancelling"),
    ("check", "checking"),
    ("add", "adding"),
    ("get", "getting"),
    ("start", "starting"),
    ("stop", "stopping"),
    ("book", "booking"),
    ("show", "showing"),
    ("read", "reading"),
];

const NEW_SKILL_DOMAIN: &str = "QuestSkill";
const NEW_SKILL_VERBS: &[(&str, &str)] = &[
    ("spin", "spinning"),
    ("guess", "guessing"),
    ("reveal", "revealing"),
    ("roll", "rolling"),
    ("join", "joining"),
];
const NEW_SKILL_NOUNS: [&str; 4] = ["riddle", "dungeon", "potion", "dragon"];

const UNACTIONABLE_RESPONSES: &[&str] = &[
    "Sorry, I don't know that one.",
    "Sorry, I can't help with that.",
    "Apologies, I'm unable to do that right now.",
    "Sorry, I'm not sure how to do that.",
    "Sorry, I cannot find that.",
];

#[derive(Debug, Clone)]
struct Intent {
    name: String,
    domain: usize,
    verb: (&'static str, &'static str),
    tail: bool,
}

#[derive(Debug, Clone)]
struct DomainVocab {
    name: String,
    nouns: Vec<String>,
}

struct World {
    domains: Vec<DomainVocab>,
    intents: Vec<Intent>,
    /// Cumulative Zipf weights over `intents` (usage rank = index).
    cumulative: Vec<f64>,
    /// Intent indices per domain.
    by_domain: Vec<Vec<usize>>,
    new_skill: DomainVocab,
    new_skill_intents: Vec<Intent>,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl World {
    fn build(cfg: &GeneratorConfig) -> Self {
        let domains: Vec<DomainVocab> = (0..cfg.n_domains)
            .map(|d| match DOMAIN_NAMES.get(d) {
                Some((name, nouns)) => DomainVocab {
                    name: (*name).to_string(),
                    nouns: nouns.iter().map(|s| s.to_string()).collect(),
                },
                None => DomainVocab {
                    name: format!("Domain{d:02}"),
                    nouns: (0..4).map(|k| format!("item{d}x{k}")).collect(),
                },
            })
            .collect();

        // Interleave domains so usage rank is spread across domains.
        let mut intents = Vec::new();
        for k in 0..cfg.intents_per_domain {
            for d in 0..cfg.n_domains {
                let verb = VERBS[(d * 5 + k) % VERBS.len()];
                let suffix = if k >= VERBS.len() { format!("{k}") } else { String::new() };
                intents.push(Intent {
                    name: format!("{}{}{}", capitalize(verb.0), domains[d].name, suffix),
                    domain: d,
                    verb,
                    tail: false,
                });
            }
        }
        let n = intents.len();
        let n_tail = (n as f64 * cfg.tail_fraction).round() as usize;
        for it in intents.iter_mut().skip(n - n_tail) {
            it.tail = true;
        }
        let mut acc = 0.0;
        let cumulative = (0..n)
            .map(|r| {
                acc += 1.0 / ((r + 1) as f64).powf(cfg.zipf_exponent);
                acc
            })
            .collect();
        let mut by_domain = vec![Vec::new(); cfg.n_domains];
        for (i, it) in intents.iter().enumerate() {
            by_domain[it.domain].push(i);
        }

        let new_skill = DomainVocab {
            name: NEW_SKILL_DOMAIN.to_string(),
            nouns: NEW_SKILL_NOUNS.iter().map(|s| s.to_string()).collect(),
        };
        let new_skill_intents = NEW_SKILL_VERBS
            .iter()
            .map(|v| Intent {
                name: format!("{}{}", capitalize(v.0), NEW_SKILL_DOMAIN),
                domain: usize::MAX,
                verb: *v,
                tail: false,
            })
            .collect();

        World {
            domains,
            intents,
            cumulative,
            by_domain,
            new_skill,
            new_skill_intents,
        }
    }

    fn sample_intent(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("at least one intent");
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|c| *c <= u).min(self.intents.len() - 1)
    }

    /// Zipf draw restricted to one domain's intents.
    fn sample_intent_in(&self, domain: usize, rng: &mut ChaCha8Rng) -> usize {
        let ids = &self.by_domain[domain];
        let weight = |i: usize| {
            let prev = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
            self.cumulative[i] - prev
        };
        let total: f64 = ids.iter().map(|&i| weight(i)).sum();
        let mut u = rng.random::<f64>() * total;
        for &i in ids {
            u -= weight(i);
            if u < 0.0 {
                return i;
            }
        }
        *ids.last().expect("non-empty domain")
    }
}

fn user_request(verb: &str, slot: &str, noun: &str, variant: usize) -> String {
    match variant % 4 {
        0 => format!("{verb} {slot} {noun}"),
        1 => format!("please {verb} the {slot} {noun}"),
        2 => format!("can you {verb} {slot} {noun} for me"),
        _ => format!("i want to {verb} my {slot} {noun}"),
    }
}

fn clean_response(verb_ing: &str, slot: &str, noun: &str, variant: usize) -> String {
    match variant % 3 {
        0 => format!("Okay, {verb_ing} {slot} {noun}."),
        1 => format!("Here is the {slot} {noun}."),
        _ => format!("Done, {verb_ing} your {slot} {noun} now."),
    }
}

struct TurnPlan<'a> {
    intent: &'a Intent,
    vocab: &'a DomainVocab,
    slot: usize,
    variant: usize,
}

fn quality_for(defect: Option<Defect>, rng: &mut ChaCha8Rng) -> f64 {
    let (lo, hi) = match defect {
        None => CLEAN_QUALITY,
        Some(d) => {
            let bands = d.quality_bands();
            bands[rng.random_range(0..bands.len())]
        }
    };
    rng.random_range(lo..=hi)
}

fn sample_defect(cfg: &GeneratorConfig, tail: bool, rng: &mut ChaCha8Rng) -> Option<Defect> {
    let m = if tail { cfg.tail_defect_multiplier } else { 1.0 };
    let un = cfg.rate(Defect::Unactionable);
    let mis = cfg.rate(Defect::Misunderstanding) * m;
    let part = cfg.rate(Defect::Partial) * m;
    // Keep the total below one while preserving the rates' proportions.
    let room = (1.0 - un).max(0.0);
    let scale = if mis + part > room { room / (mis + part) } else { 1.0 };
    let (mis, part) = (mis * scale, part * scale);
    let u = rng.random::<f64>();
    if u < un {
        Some(Defect::Unactionable)
    } else if u < un + mis {
        Some(Defect::Misunderstanding)
    } else if u < un + mis + part {
        Some(Defect::Partial)
    } else {
        None
    }
}

struct GeneratedTurn {
    turn: Turn,
    latent: LatentQuality,
}

fn realize_turn(
    world: &World,
    cfg: &GeneratorConfig,
    dialogue_id: &str,
    index: u32,
    timestamp_s: f64,
    plan: &TurnPlan<'_>,
    rng: &mut ChaCha8Rng,
) -> GeneratedTurn {
    let (verb, verb_ing) = plan.intent.verb;
    let slot = &plan.vocab.nouns[plan.slot];
    let noun = &plan.vocab.nouns[(plan.slot + 1) % plan.vocab.nouns.len()];
    let user_text = user_request(verb, slot, noun, plan.variant);

    let defect = sample_defect(cfg, plan.intent.tail, rng);
    let q = quality_for(defect, rng);

    let mut nlu_intent = plan.intent.name.clone();
    let mut nlu_domain = plan.vocab.name.clone();
    let (system_text, asr, nlu) = match defect {
        None => (
            clean_response(verb_ing, slot, noun, rng.random_range(0..3)),
            rng.random_range(0.75..=1.0),
            rng.random_range(0.7..=1.0),
        ),
        // Indistinguishable from a clean answer; only intent popularity hints at it.
        Some(Defect::Partial) => (
            clean_response(verb_ing, slot, noun, rng.random_range(0..3)),
            rng.random_range(0.75..=1.0),
            rng.random_range(0.7..=1.0),
        ),
        Some(Defect::Misunderstanding) => {
            // Serve some other domain's intent; inside the new skill, another
            // of its own intents so the holdout stays out of vocabulary.
            let (wrong, vocab) = if std::ptr::eq(plan.vocab, &world.new_skill) {
                let own = &world.new_skill_intents;
                let at = own.iter().position(|i| i.name == plan.intent.name).unwrap_or(0);
                let wi = (at + rng.random_range(1..own.len().max(2))) % own.len();
                (&own[wi], &world.new_skill)
            } else {
                let mut wi = world.sample_intent(rng);
                if world.intents[wi].domain == plan.intent.domain {
                    wi = (wi + 1) % world.intents.len();
                }
                let w = &world.intents[wi];
                (w, &world.domains[w.domain])
            };
            let s = rng.random_range(0..vocab.nouns.len());
            nlu_intent = wrong.name.clone();
            nlu_domain = vocab.name.clone();
            (
                clean_response(
                    wrong.verb.1,
                    &vocab.nouns[s],
                    &vocab.nouns[(s + 1) % vocab.nouns.len()],
                    rng.random_range(0..3),
                ),
                rng.random_range(0.3..=0.85),
                rng.random_range(0.2..=0.75),
            )
        }
        Some(Defect::Unactionable) => (
            UNACTIONABLE_RESPONSES[rng.random_range(0..UNACTIONABLE_RESPONSES.len())].to_string(),
            rng.random_range(0.6..=1.0),
            rng.random_range(0.3..=0.9),
        ),
    };

    let annotations = simulate_annotations(q, cfg, rng);
    let user_rating = (rng.random::<f64>() < cfg.user_rating_fraction)
        .then(|| simulate_user_rating(q, rng));
    GeneratedTurn {
        turn: Turn {
            index,
            user_text,
            system_text,
            timestamp_s,
            asr_confidence: asr,
            nlu_intent,
            nlu_confidence: nlu,
            nlu_domain,
            annotations,
            user_rating,
        },
        latent: LatentQuality {
            dialogue_id: dialogue_id.to_string(),
            index,
            q,
            defects: defect.into_iter().collect(),
        },
    }
}

fn generate_dialogue(
    world: &World,
    cfg: &GeneratorConfig,
    dialogue_id: String,
    segment: Segment,
    rng: &mut ChaCha8Rng,
) -> (Dialogue, Vec<LatentQuality>) {
    let n_turns = match segment {
        Segment::SingleTurn => 1,
        _ => rng.random_range(2..=7),
    };
    let (home_domain, domain_name) = match segment {
        Segment::NewSkill => (usize::MAX, world.new_skill.name.clone()),
        _ => {
            let first = world.sample_intent(rng);
            let d = world.intents[first].domain;
            (d, world.domains[d].name.clone())
        }
    };

    let pick_plan = |rng: &mut ChaCha8Rng| -> TurnPlan<'_> {
        let (intent, vocab) = if segment == Segment::NewSkill {
            let i = rng.random_range(0..world.new_skill_intents.len());
            (&world.new_skill_intents[i], &world.new_skill)
        } else {
            let i = if rng.random::<f64>() < 0.8 {
                world.sample_intent_in(home_domain, rng)
            } else {
                world.sample_intent(rng)
            };
            let it = &world.intents[i];
            (it, &world.domains[it.domain])
        };
        TurnPlan {
            intent,
            vocab,
            slot: rng.random_range(0..vocab.nouns.len()),
            variant: rng.random_range(0..4),
        }
    };

    let mut turns = Vec::with_capacity(n_turns);
    let mut latent = Vec::with_capacity(n_turns);
    let mut plan = pick_plan(rng);
    let mut ts = 0.0;
    for k in 1..=n_turns {
        let g = realize_turn(world, cfg, &dialogue_id, k as u32, ts, &plan, rng);
        let dissatisfied = g.latent.q < 3.0;
        let paraphrase = dissatisfied && rng.random::<f64>() < cfg.paraphrase_prob;
        let sys_len = g.turn.system_text.split_whitespace().count() as f64;
        ts += if paraphrase {
            rng.random_range(2.0..6.0)
        } else {
            rng.random_range(5.0..20.0) + 0.4 * sys_len
        };
        ts = (ts * 1000.0).round() / 1000.0;
        turns.push(g.turn);
        latent.push(g.latent);
        plan = if paraphrase {
            TurnPlan {
                variant: (plan.variant + rng.random_range(1..4)) % 4,
                ..plan
            }
        } else {
            pick_plan(rng)
        };
    }
    (
        Dialogue {
            dialogue_id,
            segment,
            domain: domain_name,
            turns,
        },
        latent,
    )
}

/// Generate a corpus and its latent-quality table.
pub fn generate_corpus(config: &GeneratorConfig) -> Result<(Corpus, Vec<LatentQuality>)> {
    config.validate()?;
    let world = World::build(config);
    let n = config.n_dialogues;
    let n_new = (n as f64 * config.new_skill_fraction).round() as usize;
    let n_single = ((n as f64 * config.single_turn_fraction).round() as usize).min(n - n_new);
    let n_multi = n - n_new - n_single;

    let mut segments: Vec<Segment> = std::iter::repeat_n(Segment::SingleTurn, n_single)
        .chain(std::iter::repeat_n(Segment::MultiTurn, n_multi))
        .chain(std::iter::repeat_n(Segment::NewSkill, n_new))
        .collect();
    segments.shuffle(&mut rng_from(config.seed, u64::MAX));

    use rayon::prelude::*;
    let generated: Vec<(Dialogue, Vec<LatentQuality>)> = segments
        .par_iter()
        .enumerate()
        .map(|(i, seg)| {
            let mut rng = rng_from(config.seed, i as u64);
            generate_dialogue(&world, config, format!("dlg-{i:06}"), *seg, &mut rng)
        })
        .collect();

    let mut dialogues = Vec::with_capacity(n);
    let mut latent = Vec::new();
    for (d, l) in generated {
        dialogues.push(d);
        latent.extend(l);
    }
    let mut corpus = Corpus::new(dialogues);
    corpus.metadata.insert("name".into(), "synthetic".into());
    corpus
        .metadata
        .insert("seed".into(), config.seed.to_string());
    corpus.metadata.insert("source".into(), "synth".into());
    Ok((corpus, latent))
}

/// Latent sidecar JSONL: `{dialogue_id, index, q, defects}` per line.
pub fn latent_jsonl(latent: &[LatentQuality]) -> Result<String> {
    let mut out = String::new();
    for l in latent {
        out.push_str(&serde_json::to_string(l)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_corpus, write_corpus};
    use crate::features::{unactionable_feature, Lexicon};
    use rand::SeedableRng;

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n_dialogues: 200,
            new_skill_fraction: 0.05,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = GeneratorConfig {
            n_dialogues: 10,
            seed: 7,
            ..Default::default()
        };
        let (a, la) = generate_corpus(&cfg).unwrap();
        let (b, lb) = generate_corpus(&cfg).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_corpus(&a, &mut ba).unwrap();
        write_corpus(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(la, lb);
        let (c, _) = generate_corpus(&GeneratorConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_defects_no_noise_gives_all_fives() {
        let mut cfg = small(1);
        cfg.annotator_noise_sd = 0.0;
        for r in cfg.defect_rates.values_mut() {
            *r = 0.0;
        }
        let (c, _) = generate_corpus(&cfg).unwrap();
        for (_, t) in c.turns() {
            assert_eq!(t.label().unwrap(), 5.0);
        }
    }

    #[test]
    fn all_unactionable() {
        let mut cfg = small(2);
        cfg.defect_rates.insert(Defect::Unactionable, 1.0);
        cfg.defect_rates.insert(Defect::Misunderstanding, 0.0);
        cfg.defect_rates.insert(Defect::Partial, 0.0);
        let (c, latent) = generate_corpus(&cfg).unwrap();
        let lex = Lexicon::default();
        for (_, t) in c.turns() {
            assert_eq!(unactionable_feature(&t.system_text, &lex).unwrap(), 1.0, "{}", t.system_text);
        }
        assert!(latent.iter().all(|l| l.q <= 2.0));
    }

    #[test]
    fn output_passes_validation_round_trip() {
        let (c, latent) = generate_corpus(&small(3)).unwrap();
        let mut buf = Vec::new();
        write_corpus(&c, &mut buf).unwrap();
        let back = read_corpus(buf.as_slice()).unwrap();
        assert_eq!(back.dialogues, c.dialogues);
        assert_eq!(latent.len(), c.turn_count());
    }

    #[test]
    fn segment_fractions_and_new_skill_domain() {
        let cfg = GeneratorConfig {
            n_dialogues: 1000,
            new_skill_fraction: 0.03,
            seed: 4,
            ..Default::default()
        };
        let (c, _) = generate_corpus(&cfg).unwrap();
        let count = |s| c.dialogues.iter().filter(|d| d.segment == s).count();
        assert_eq!(count(Segment::NewSkill), 30);
        assert_eq!(count(Segment::SingleTurn), 900);
        assert_eq!(count(Segment::MultiTurn), 70);
        let new_domains: std::collections::BTreeSet<_> = c
            .turns()
            .filter(|(d, _)| d.segment == Segment::NewSkill)
            .map(|(_, t)| t.nlu_domain.clone())
            .collect();
        let other_domains: std::collections::BTreeSet<_> = c
            .turns()
            .filter(|(d, _)| d.segment != Segment::NewSkill)
            .map(|(_, t)| t.nlu_domain.clone())
            .collect();
        assert!(new_domains.is_disjoint(&other_domains));
        for d in &c.dialogues {
            if d.segment != Segment::SingleTurn {
                assert!((2..=7).contains(&d.len()));
            }
        }
    }

    #[test]
    fn unactionable_turns_have_lower_quality() {
        let (_, latent) = generate_corpus(&small(5)).unwrap();
        let mean = |f: &dyn Fn(&LatentQuality) -> bool| {
            let v: Vec<f64> = latent.iter().filter(|l| f(l)).map(|l| l.q).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let with = mean(&|l| l.defects.contains(&Defect::Unactionable));
        let without = mean(&|l| !l.defects.contains(&Defect::Unactionable));
        // Unactionable q <= 2 while every other range ends at or above 2.5.
        assert!(without - with >= 0.5, "{with} vs {without}");
    }

    #[test]
    fn annotation_noise_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = GeneratorConfig {
            annotator_noise_sd: 0.0,
            ..Default::default()
        };
        let r: Vec<u8> = simulate_annotations(4.0, &cfg, &mut rng).iter().map(|a| a.rating).collect();
        assert_eq!(r, [4, 4, 4]);
        let noisy = GeneratorConfig {
            annotator_noise_sd: 2.0,
            ..Default::default()
        };
        for _ in 0..500 {
            for a in simulate_annotations(5.0, &noisy, &mut rng) {
                assert!((1..=5).contains(&a.rating));
            }
            assert!(simulate_user_rating(1.0, &mut rng) >= 1);
        }
    }

    #[test]
    fn config_validation_and_overrides() {
        let empty = GeneratorConfig {
            n_dialogues: 0,
            ..GeneratorConfig::default()
        };
        assert!(generate_corpus(&empty).is_err());
        let overfull = GeneratorConfig {
            single_turn_fraction: 0.95,
            new_skill_fraction: 0.1,
            ..GeneratorConfig::default()
        };
        assert!(overfull.validate().is_err());
        let mut cfg = GeneratorConfig::default();
        cfg.set("defect_rates.partial", "0.2").unwrap();
        cfg.set("annotator_noise_sd", "0.5").unwrap();
        assert_eq!(cfg.rate(Defect::Partial), 0.2);
        assert_eq!(cfg.annotator_noise_sd, 0.5);
        assert!(cfg.set("bogus", "1").is_err());
        assert!(cfg.set("n_dialogues", "many").is_err());
    }
}
