//! `turnsat`: generate, inspect, featurize, train, evaluate and ablate.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};

use turnsat::ablation::ablate;
use turnsat::corpus::{corpus_stats, load_corpus, save_corpus};
use turnsat::eval::{iaa, render_table, user_rating_correlation, DEFAULT_BOOTSTRAP};
use turnsat::features::{feature_csv, featurize_corpus, FeatureSchema, FeatureSet, Lexicon};
use turnsat::models::{ModelKind, ModelSpec};
use turnsat::pipeline::{prepare, train_artifact, ModelArtifact, SplitParams, DEFAULT_TEST_FRACTION};
use turnsat::synth::{generate_corpus, latent_jsonl, GeneratorConfig};
use turnsat::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "turnsat", version, about = "Turn-level user satisfaction estimation")]
struct Cli {
    /// Master seed; required by every subcommand that uses randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// File of `key = value` overrides (`synth.*`, `<model>.*`, `split.test_fraction`, `eval.bootstrap`).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for reports and artifacts.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out_dir: PathBuf,

    /// Apology/negation lexicon (`apology = a, b` / `negation = c, d`).
    #[arg(long, global = true, value_name = "FILE")]
    lexicon: Option<PathBuf>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Default,
    PopularityDominant,
    UserStudy,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus and its latent-quality sidecar.
    Synth {
        #[arg(long)]
        dialogues: Option<usize>,
        #[arg(long, value_enum, default_value = "default")]
        preset: Preset,
        /// Generator override, e.g. `annotator_noise_sd=0`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Corpus path; defaults to `<out-dir>/corpus.jsonl`.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Rating histogram per segment.
    Stats { corpus: PathBuf },
    /// Split the corpus and write feature matrices.
    Featurize {
        corpus: PathBuf,
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Train one model kind, or `all`.
    Train {
        corpus: PathBuf,
        #[arg(long, default_value = "gbrt")]
        model: String,
        /// Hyperparameter override, e.g. `n_stages=50`.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Score trained models on the test and holdout turns of a corpus.
    Eval {
        corpus: PathBuf,
        /// Model artifact(s) written by `train`.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Retrain without each feature set and report the differences.
    Ablate {
        corpus: PathBuf,
        #[arg(long, default_value = "gbrt")]
        model: String,
        /// Comma-separated feature sets; defaults to all five new sets.
        #[arg(long, value_delimiter = ',')]
        sets: Vec<String>,
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Inter-annotator agreement and correlation with user ratings.
    Iaa {
        corpus: PathBuf,
        #[arg(long)]
        bootstrap: Option<usize>,
    },
}

impl Command {
    fn needs_seed(&self) -> bool {
        !matches!(self, Command::Stats { .. })
    }
}

/// Parsed `--config` file.
#[derive(Debug, Default)]
struct Overrides(BTreeMap<String, String>);

impl Overrides {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Overrides::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("config line {}: expected `key = value`", i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        for k in map.keys() {
            let head = k.split('.').next().unwrap_or("");
            let known = matches!(k.as_str(), "split.test_fraction" | "eval.bootstrap")
                || head == "synth"
                || head.parse::<ModelKind>().is_ok();
            if !known {
                return Err(Error::config(format!("unknown config key `{k}`")));
            }
        }
        Ok(Overrides(map))
    }

    fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.0.iter().filter_map(move |(k, v)| {
            k.strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('.'))
                .map(|r| (r, v.as_str()))
        })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.0
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::config(format!("`{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }
}

fn split_kv(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::config(format!("expected KEY=VALUE, got `{s}`")))
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    overrides: Overrides,
    lexicon: Lexicon,
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.out(name);
        fs::write(&p, contents)?;
        Ok(p)
    }

    fn split(&self, flag: Option<f64>) -> Result<SplitParams> {
        let test_fraction = match flag {
            Some(f) => f,
            None => self
                .overrides
                .get("split.test_fraction")?
                .unwrap_or(DEFAULT_TEST_FRACTION),
        };
        Ok(SplitParams {
            test_fraction,
            seed: self.seed,
        })
    }

    fn bootstrap(&self, flag: Option<usize>) -> Result<usize> {
        Ok(match flag {
            Some(b) => b,
            None => self.overrides.get("eval.bootstrap")?.unwrap_or(DEFAULT_BOOTSTRAP),
        })
    }

    fn spec(&self, kind: ModelKind, params: &[String]) -> Result<ModelSpec> {
        let mut spec = ModelSpec::default_for(kind, self.seed);
        for (k, v) in self.overrides.with_prefix(kind.as_str()) {
            spec.set(k, v)?;
        }
        for p in params {
            let (k, v) = split_kv(p)?;
            spec.set(k, v)?;
        }
        Ok(spec)
    }
}

fn cmd_synth(ctx: &Ctx, dialogues: Option<usize>, preset: Preset, sets: &[String], output: Option<PathBuf>) -> Result<()> {
    let mut cfg = match preset {
        Preset::Default => GeneratorConfig::default(),
        Preset::PopularityDominant => GeneratorConfig::popularity_dominant(),
        Preset::UserStudy => GeneratorConfig::user_study(),
    };
    for (k, v) in ctx.overrides.with_prefix("synth") {
        cfg.set(k, v)?;
    }
    for s in sets {
        let (k, v) = split_kv(s)?;
        cfg.set(k, v)?;
    }
    if let Some(n) = dialogues {
        cfg.n_dialogues = n;
    }
    cfg.seed = ctx.seed;
    let (corpus, latent) = generate_corpus(&cfg)?;
    let path = output.unwrap_or_else(|| ctx.out("corpus.jsonl"));
    save_corpus(&corpus, &path)?;
    let sidecar = path.with_extension("latent.jsonl");
    fs::write(&sidecar, latent_jsonl(&latent)?)?;
    println!(
        "wrote {} dialogues ({} turns) to {}; latent quality in {}",
        corpus.len(),
        corpus.turn_count(),
        path.display(),
        sidecar.display()
    );
    Ok(())
}

fn cmd_stats(ctx: &Ctx, corpus: &Path) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    let stats = corpus_stats(&corpus)?;
    let p = ctx.write("rating_histogram.csv", &stats.to_csv())?;
    print!("{}", stats.summary());
    println!("histogram: {}", p.display());
    Ok(())
}

fn cmd_featurize(ctx: &Ctx, corpus: &Path, test_fraction: Option<f64>) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    let split = ctx.split(test_fraction)?.apply(&corpus)?;
    let schema = FeatureSchema::full();
    let prepared = prepare(&split, &schema, &ctx.lexicon)?;
    ctx.write("features_train.csv", &feature_csv(&schema, &prepared.train))?;
    let test = featurize_corpus(&split.test, &prepared.table, &schema, &ctx.lexicon)?;
    ctx.write("features_test.csv", &feature_csv(&schema, &test))?;
    let holdout = featurize_corpus(&split.holdout, &prepared.table, &schema, &ctx.lexicon)?;
    ctx.write("features_holdout.csv", &feature_csv(&schema, &holdout))?;
    ctx.write("popularity.json", &serde_json::to_string_pretty(&prepared.table)?)?;
    println!(
        "featurized {} train / {} test / {} holdout turns ({} features)",
        prepared.train.len(),
        test.len(),
        holdout.len(),
        schema.len()
    );
    Ok(())
}

fn parse_kinds(model: &str) -> Result<Vec<ModelKind>> {
    if model == "all" {
        Ok(ModelKind::ALL.to_vec())
    } else {
        Ok(vec![model.parse()?])
    }
}

fn cmd_train(ctx: &Ctx, corpus: &Path, model: &str, params: &[String], test_fraction: Option<f64>) -> Result<()> {
    let kinds = parse_kinds(model)?;
    if kinds.len() > 1 && !params.is_empty() {
        return Err(Error::config("--param needs a single --model kind"));
    }
    let specs = kinds
        .iter()
        .map(|k| ctx.spec(*k, params))
        .collect::<Result<Vec<_>>>()?;
    let corpus = load_corpus(corpus)?;
    let split = ctx.split(test_fraction)?;
    let mut log_lines = Vec::new();
    for spec in &specs {
        log::info!("training {}", spec.describe());
        let (artifact, prepared) = train_artifact(&corpus, spec, split, &ctx.lexicon)?;
        let name = format!("model_{}.json", spec.kind());
        let p = ctx.out(&name);
        artifact.save(&p)?;
        let line = format!(
            "{} | train_turns={} test_fraction={} | {}",
            spec.describe(),
            prepared.train.len(),
            split.test_fraction,
            name
        );
        println!("{line}");
        log_lines.push(line);
    }
    log_lines.push(String::new());
    ctx.write("train.log", &log_lines.join("\n"))?;
    Ok(())
}

fn cmd_eval(ctx: &Ctx, corpus: &Path, models: &[PathBuf], bootstrap: Option<usize>) -> Result<()> {
    let n_boot = ctx.bootstrap(bootstrap)?;
    let artifacts = models
        .iter()
        .map(ModelArtifact::load)
        .collect::<Result<Vec<_>>>()?;
    let corpus = load_corpus(corpus)?;
    let mut reports = Vec::new();
    for a in &artifacts {
        let rep = a.evaluate(&corpus, n_boot, ctx.seed)?;
        for note in &rep.notes {
            log::warn!("{}: {note}", rep.model);
        }
        reports.push(rep);
    }
    let table = render_table(&reports);
    ctx.write("eval.json", &serde_json::to_string_pretty(&reports)?)?;
    ctx.write("eval.txt", &table)?;
    print!("{table}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ablate(
    ctx: &Ctx,
    corpus: &Path,
    model: &str,
    sets: &[String],
    params: &[String],
    test_fraction: Option<f64>,
    bootstrap: Option<usize>,
) -> Result<bool> {
    let spec = ctx.spec(model.parse()?, params)?;
    let sets: Vec<FeatureSet> = if sets.is_empty() {
        FeatureSet::NEW.to_vec()
    } else {
        sets.iter().map(|s| s.trim().parse()).collect::<Result<_>>()?
    };
    let n_boot = ctx.bootstrap(bootstrap)?;
    let corpus = load_corpus(corpus)?;
    let split = ctx.split(test_fraction)?.apply(&corpus)?;
    let report = ablate(&split, &spec, &sets, &ctx.lexicon, n_boot, ctx.seed)?;
    ctx.write("ablation.json", &report.to_json()?)?;
    let md = report.to_markdown();
    ctx.write("ablation.md", &md)?;
    print!("{md}");
    Ok(report.failures.is_empty())
}

fn cmd_iaa(ctx: &Ctx, corpus: &Path, bootstrap: Option<usize>) -> Result<()> {
    let n_boot = ctx.bootstrap(bootstrap)?;
    let corpus = load_corpus(corpus)?;
    let agreement = iaa(&corpus)?;
    let has_ratings = corpus.turns().any(|(_, t)| t.user_rating.is_some());
    let user = if has_ratings {
        Some(user_rating_correlation(&corpus, n_boot, ctx.seed)?)
    } else {
        None
    };
    println!(
        "mean pairwise spearman rho {:.4} over {} turns",
        agreement.mean_rho, agreement.n_turns
    );
    for p in &agreement.pairs {
        println!("  {} vs {}: {:.4}", p.a, p.b, p.rho);
    }
    if let Some(u) = &user {
        println!(
            "user rating correlation {} over {} turns",
            u.pearson.display(),
            u.n_turns
        );
    }
    let json = serde_json::json!({ "agreement": agreement, "user_rating": user });
    ctx.write("iaa.json", &serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

fn run(cli: Cli, seed: u64) -> Result<bool> {
    let overrides = Overrides::load(cli.config.as_deref())?;
    let lexicon = match &cli.lexicon {
        Some(p) => Lexicon::parse(
            &fs::read_to_string(p)
                .map_err(|e| Error::config(format!("cannot read lexicon {}: {e}", p.display())))?,
        )?,
        None => Lexicon::default(),
    };
    fs::create_dir_all(&cli.out_dir)?;
    let ctx = Ctx {
        seed,
        out_dir: cli.out_dir,
        overrides,
        lexicon,
    };
    match cli.command {
        Command::Synth {
            dialogues,
            preset,
            sets,
            output,
        } => cmd_synth(&ctx, dialogues, preset, &sets, output)?,
        Command::Stats { corpus } => cmd_stats(&ctx, &corpus)?,
        Command::Featurize { corpus, test_fraction } => cmd_featurize(&ctx, &corpus, test_fraction)?,
        Command::Train {
            corpus,
            model,
            params,
            test_fraction,
        } => cmd_train(&ctx, &corpus, &model, &params, test_fraction)?,
        Command::Eval {
            corpus,
            models,
            bootstrap,
        } => cmd_eval(&ctx, &corpus, &models, bootstrap)?,
        Command::Ablate {
            corpus,
            model,
            sets,
            params,
            test_fraction,
            bootstrap,
        } => return cmd_ablate(&ctx, &corpus, &model, &sets, &params, test_fraction, bootstrap),
        Command::Iaa { corpus, bootstrap } => cmd_iaa(&ctx, &corpus, bootstrap)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    let seed = match cli.seed {
        Some(s) => s,
        None if !cli.command.needs_seed() => 0,
        None => Cli::command()
            .error(
                ErrorKind::MissingRequiredArgument,
                "this subcommand uses randomness and needs an explicit --seed <SEED>",
            )
            .exit(),
    };
    match run(cli, seed) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
