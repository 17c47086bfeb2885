use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use voxrank::corpus::{load_manifest, save_manifest, total_duration, write_manifest, Corpus, SplitSpec};
use voxrank::evalstats::{self, Budget, Oracle, StudySettings};
use voxrank::lexicon::{Lexicon, OovPolicy};
use voxrank::predictors::external::{ExternalScorer, ScorerEndpoint};
use voxrank::predictors::features::{CorpusStats, TokenFeaturizer};
use voxrank::predictors::logistic::TrainConfig;
use voxrank::predictors::tokenize::SubwordVocab;
use voxrank::predictors::{
    labeled_sequences, phoneme_examples, sentence_outcomes, train_phoneme_predictor, train_sentence_predictor,
    train_word_predictor, ModelFile,
};
use voxrank::prioritizers::{
    duration_matched_budget, prioritize_pep, prioritize_pep_d, prioritize_phoneme_rich, prioritize_prophet,
    prioritize_random, prioritize_sentence, select_within_budget, DesiredDistribution, RankedCase, RankedSuite,
    Strategy,
};
use voxrank::simoracle::{RuleFile, SimulatedAsr};
use voxrank::synth::{self, SynthConfig};
use voxrank::{cer, wer_text};

#[derive(Parser)]
#[command(name = "voxrank", version, about = "Prioritize speech test cases for ASR systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a manifest and print a summary; optionally rewrite it canonically.
    Ingest(IngestArgs),
    /// Fill in hypotheses with the rule-based simulated ASR.
    Simulate(SimulateArgs),
    /// Train an error predictor from a manifest with hypotheses.
    Train(TrainArgs),
    /// Rank a manifest with one strategy, optionally cut to a time budget.
    Prioritize(PrioritizeArgs),
    /// Take the budget-fitting prefix of a ranked manifest.
    Select(SelectArgs),
    /// Print pooled WER and CER of a manifest with hypotheses.
    Evaluate(EvaluateArgs),
    /// Recompute statistics and the summary from a results table.
    Report(ReportArgs),
    /// Run a full prioritization study from a configuration file.
    Study(StudyArgs),
    /// Generate a synthetic lexicon, manifest and error rules.
    Synth(SynthArgs),
}

#[derive(Args)]
struct LexiconArgs {
    /// Pronunciation dictionary.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Handling of words missing from the dictionary.
    #[arg(long, default_value = "skip")]
    oov: OovArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum OovArg {
    Skip,
    Letters,
}

impl From<OovArg> for OovPolicy {
    fn from(o: OovArg) -> Self {
        match o {
            OovArg::Skip => OovPolicy::Skip,
            OovArg::Letters => OovPolicy::Letters,
        }
    }
}

impl LexiconArgs {
    fn load(&self) -> Result<Option<Arc<Lexicon>>> {
        self.lexicon
            .as_ref()
            .map(|p| {
                Lexicon::load(p, self.oov.into())
                    .map(Arc::new)
                    .with_context(|| format!("cannot load lexicon {}", p.display()))
            })
            .transpose()
    }

    fn require(&self, why: &str) -> Result<Arc<Lexicon>> {
        match self.load()? {
            Some(l) => Ok(l),
            None => bail!("--lexicon is required {why}"),
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    lexicon: LexiconArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    rules: PathBuf,
    /// Overrides the seed in the rule file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    lexicon: LexiconArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Word,
    Sentence,
    Phoneme,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    kind: ModelKind,
    /// Manifest with hypotheses (the transcribed seed set).
    #[arg(long = "in")]
    input: PathBuf,
    /// Unlabeled manifest whose references provide word frequencies; defaults to --in.
    #[arg(long)]
    stats_from: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Subword vocabulary, one piece per line (`##` marks continuations).
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    lexicon: LexiconArgs,
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    positive_weight: Option<f64>,
}

impl TrainFlags {
    fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.l2 {
            cfg.l2 = v;
        }
        if let Some(v) = self.positive_weight {
            cfg.positive_weight = v;
        }
        cfg
    }
}

#[derive(Args)]
#[group(id = "budget", multiple = false)]
struct BudgetArgs {
    #[arg(long, group = "budget")]
    budget_seconds: Option<f64>,
    /// Budget equal to the duration of a seeded random sample of K cases.
    #[arg(long, group = "budget")]
    budget_cases: Option<usize>,
}

#[derive(Args)]
struct PrioritizeArgs {
    #[arg(long)]
    strategy: Strategy,
    #[arg(long = "in")]
    input: PathBuf,
    /// Ranked manifest; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trained model file (pep, pep-d, sentence, prophet).
    #[arg(long)]
    model: Option<PathBuf>,
    /// External token scorer for prophet: `tcp://host:port` or `cmd:program args`.
    #[arg(long, conflicts_with = "model")]
    scorer: Option<String>,
    /// Desired phoneme distribution (`PHONEME weight` lines); uniform when absent.
    #[arg(long)]
    distribution: Option<PathBuf>,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    lexicon: LexiconArgs,
}

#[derive(Args)]
struct SelectArgs {
    /// Ranked manifest as written by `prioritize`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory containing results.tsv.
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Where to write statistics.tsv and summary.txt; defaults to --results.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Study configuration (TOML). Relative paths inside it resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated seeds, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// Comma-separated duration-matched budgets, in cases.
    #[arg(long, value_delimiter = ',')]
    budget_cases: Option<Vec<usize>>,
    /// Comma-separated fixed budgets, in seconds.
    #[arg(long, value_delimiter = ',')]
    budget_seconds: Option<Vec<f64>>,
    /// Significance level for the statistics table.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    cases: usize,
    #[arg(long, default_value_t = 1500)]
    vocabulary: usize,
    #[arg(long, default_value_t = 30)]
    phonemes: usize,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    /// Also write a rule file corrupting rare words and words containing --phoneme.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, default_value = "SH")]
    phoneme: String,
    #[arg(long, default_value_t = 3)]
    frequency_threshold: u64,
    #[arg(long, default_value_t = 0.9)]
    probability: f64,
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    load_manifest(path).with_context(|| format!("cannot load manifest {}", path.display()))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn ingest(args: IngestArgs) -> Result<()> {
    let corpus = load_corpus(&args.input)?;
    let lexicon = args.lexicon.load()?;
    let hyps = corpus.iter().filter(|c| c.hypothesis.is_some()).count();
    println!("cases\t{}", corpus.len());
    println!("duration_s\t{:.2}", total_duration(corpus.iter()));
    println!("with_hypothesis\t{hyps}");
    if let Some(lex) = lexicon {
        let mut words = 0;
        let mut oov = std::collections::BTreeSet::new();
        for c in corpus.iter() {
            let ph = lex.phonemize(&c.reference);
            words += voxrank::normalize(&c.reference).len();
            oov.extend(ph.oov_words);
        }
        println!("words\t{words}");
        println!("oov_types\t{}", oov.len());
    }
    if let Some(out) = &args.out {
        save_manifest(out, corpus.cases(), None).with_context(|| format!("cannot write {}", out.display()))?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let corpus = load_corpus(&args.input)?;
    let rules = RuleFile::load(&args.rules).with_context(|| format!("cannot load rules {}", args.rules.display()))?;
    let mut sim = SimulatedAsr::from_rule_file(rules, args.seed, args.lexicon.load()?)?;
    sim.calibrate(corpus.iter().map(|c| c.reference.as_str()));
    let out = sim.transcribe_corpus(&corpus);
    let pairs: Vec<(&str, &str)> = out
        .iter()
        .map(|c| (c.reference.as_str(), c.hypothesis.as_deref().unwrap_or_default()))
        .collect();
    if !pairs.is_empty() {
        log::info!("simulated WER {:.4} over {} cases", wer_text(&pairs)?, pairs.len());
    }
    save_manifest(&args.out, out.cases(), None).with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let data = load_corpus(&args.input)?;
    let lexicon = args.lexicon.load()?;
    let cfg = args.train.apply(TrainConfig {
        seed: args.seed,
        ..TrainConfig::default()
    });
    let featurizer = || -> Result<TokenFeaturizer> {
        let stats_corpus = match &args.stats_from {
            Some(p) => load_corpus(p)?,
            None => data.clone(),
        };
        let stats = CorpusStats::from_texts(stats_corpus.iter().map(|c| c.reference.as_str()), lexicon.as_deref());
        let mut f = TokenFeaturizer::new(stats);
        f.set_lexicon(lexicon.clone());
        Ok(f)
    };
    let (model, report) = match args.kind {
        ModelKind::Word => {
            let vocab = args.vocab.as_ref().map(SubwordVocab::load).transpose()?;
            let seqs = labeled_sequences(data.cases(), vocab.as_ref())?;
            let p = train_word_predictor(&seqs, featurizer()?, vocab, &cfg)?;
            let r = p.meta.report.clone();
            (ModelFile::Word(p), r)
        }
        ModelKind::Sentence => {
            let p = train_sentence_predictor(&sentence_outcomes(data.cases())?, featurizer()?, &cfg)?;
            let r = p.meta.report.clone();
            (ModelFile::Sentence(p), r)
        }
        ModelKind::Phoneme => {
            let lex = args.lexicon.require("to train a phoneme model")?;
            let p = train_phoneme_predictor(&phoneme_examples(&lex, data.cases())?, &cfg)?;
            let r = p.meta.report.clone();
            (ModelFile::Phoneme(p), r)
        }
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    log::info!(
        "trained {} model on {} examples ({} positive): loss {:.6}, base rate {:.6}",
        model.kind(),
        report.examples,
        report.positives,
        report.final_loss,
        report.base_rate_loss
    );
    model
        .save(&args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    Ok(())
}

fn load_model(path: Option<&PathBuf>, strategy: Strategy) -> Result<ModelFile> {
    let path = path.with_context(|| format!("strategy {strategy} needs --model"))?;
    ModelFile::load(path).with_context(|| format!("cannot load model {}", path.display()))
}

fn wrong_kind(strategy: Strategy, model: &ModelFile) -> anyhow::Error {
    anyhow::anyhow!("strategy {strategy} cannot use a {} model", model.kind())
}

fn distribution(path: Option<&PathBuf>, lex: &Lexicon) -> Result<DesiredDistribution> {
    match path {
        Some(p) => {
            DesiredDistribution::load(p, lex).with_context(|| format!("cannot load distribution {}", p.display()))
        }
        None => Ok(DesiredDistribution::uniform(lex)),
    }
}

fn resolve_budget(args: &BudgetArgs, pool: &[voxrank::TestCase], seed: u64) -> Result<Option<f64>> {
    Ok(match (args.budget_seconds, args.budget_cases) {
        (Some(s), _) => Some(s),
        (None, Some(k)) => Some(duration_matched_budget(pool, k, seed)?),
        (None, None) => None,
    })
}

fn emit(suite: &RankedSuite, budget: Option<f64>, out: Option<&Path>) -> Result<()> {
    let (cases, scores) = match budget {
        Some(b) => {
            let sel = select_within_budget(suite, b)?;
            log::info!(
                "{} cases fit the budget ({:.2}s of {:.2}s)",
                sel.selected.len(),
                sel.used_s,
                b
            );
            (sel.selected, sel.scores)
        }
        None => (suite.cases().cloned().collect(), suite.scores()),
    };
    let mut w = open_output(out)?;
    write_manifest(&mut w, &cases, Some(&scores))?;
    w.flush()?;
    Ok(())
}

fn prioritize(args: PrioritizeArgs) -> Result<()> {
    let corpus = load_corpus(&args.input)?;
    let cases = corpus.cases();
    let strategy = args.strategy;
    let suite = match strategy {
        Strategy::Random => prioritize_random(cases, args.seed),
        Strategy::PhonemeRich => {
            let lex = args.lexicon.require("for phoneme-rich")?;
            prioritize_phoneme_rich(cases, &lex, &distribution(args.distribution.as_ref(), &lex)?)
        }
        Strategy::Pep | Strategy::PepD => {
            let lex = args.lexicon.require(&format!("for {strategy}"))?;
            let model = load_model(args.model.as_ref(), strategy)?;
            let ModelFile::Phoneme(pep) = &model else {
                return Err(wrong_kind(strategy, &model));
            };
            if strategy == Strategy::Pep {
                prioritize_pep(cases, pep, &lex)
            } else {
                prioritize_pep_d(cases, pep, &lex, &distribution(args.distribution.as_ref(), &lex)?)
            }
        }
        Strategy::SentenceFailure => {
            let mut model = load_model(args.model.as_ref(), strategy)?;
            let ModelFile::Sentence(sp) = &mut model else {
                return Err(wrong_kind(strategy, &model));
            };
            sp.set_lexicon(args.lexicon.load()?);
            prioritize_sentence(cases, sp)
        }
        Strategy::Prophet => match &args.scorer {
            Some(endpoint) => {
                let scorer = ExternalScorer::new(endpoint.parse::<ScorerEndpoint>()?);
                prioritize_prophet(cases, &scorer)?
            }
            None => {
                let mut model = load_model(args.model.as_ref(), strategy)?;
                let ModelFile::Word(wp) = &mut model else {
                    return Err(wrong_kind(strategy, &model));
                };
                wp.set_lexicon(args.lexicon.load()?);
                prioritize_prophet(cases, wp)?
            }
        },
    };
    let budget = resolve_budget(&args.budget, cases, args.seed)?;
    emit(&suite, budget, args.out.as_deref())
}

fn select(args: SelectArgs) -> Result<()> {
    let corpus = load_corpus(&args.input)?;
    let entries = corpus
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let score = c.extra.get("score").and_then(|v| v.as_f64()).unwrap_or(0.0);
            let mut case = c.clone();
            case.extra.remove("rank");
            case.extra.remove("score");
            RankedCase {
                case,
                score,
                original_index: i,
            }
        })
        .collect();
    let suite = RankedSuite {
        entries,
        strategy: Strategy::Random,
        seed: args.seed,
    };
    let budget = resolve_budget(&args.budget, corpus.cases(), args.seed)?
        .context("select needs --budget-seconds or --budget-cases")?;
    emit(&suite, Some(budget), args.out.as_deref())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let corpus = load_corpus(&args.input)?;
    let pairs = corpus
        .iter()
        .map(|c| {
            c.hypothesis
                .as_deref()
                .map(|h| (c.reference.as_str(), h))
                .with_context(|| format!("test case `{}` has no hypothesis", c.id))
        })
        .collect::<Result<Vec<_>>>()?;
    println!("WER\t{:.4}", wer_text(&pairs)?);
    println!("CER\t{:.4}", cer(&pairs)?);
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let results_path = args.results.join("results.tsv");
    let results = evalstats::read_results(&results_path)
        .with_context(|| format!("cannot read results {}", results_path.display()))?;
    let out = args.out.unwrap_or(args.results);
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let rows = evalstats::statistics(&results, args.alpha);
    evalstats::write_statistics(out.join("statistics.tsv"), &rows)?;
    let summary = evalstats::render_summary(&results, &rows, args.alpha);
    std::fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

/// Study configuration file. Paths are relative to the file's directory.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyConfig {
    corpus: PathBuf,
    lexicon: PathBuf,
    #[serde(default)]
    oov: Option<String>,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    distribution: Option<PathBuf>,
    #[serde(default)]
    vocab: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default = "default_seed_fraction")]
    seed_fraction: f64,
    #[serde(default)]
    strategies: Option<Vec<String>>,
    #[serde(default)]
    budget_cases: Vec<usize>,
    #[serde(default)]
    budget_seconds: Vec<f64>,
    #[serde(default)]
    jobs: Option<usize>,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default)]
    split: SplitSection,
    oracle: OracleSection,
    #[serde(default)]
    train: TrainSection,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_seed_fraction() -> f64 {
    0.1
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitSection {
    selection: f64,
    validation: f64,
    test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            selection: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleSection {
    /// Simulated ASR rule file.
    #[serde(default)]
    rules: Option<PathBuf>,
    #[serde(default)]
    seed: Option<u64>,
    /// Use hypotheses stored in the manifest instead of a simulator.
    #[serde(default)]
    hypotheses: bool,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    iterations: Option<usize>,
    learning_rate: Option<f64>,
    l2: Option<f64>,
    positive_weight: Option<f64>,
}

fn study(args: StudyArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read study config {}", args.config.display()))?;
    let cfg: StudyConfig =
        toml::from_str(&text).with_context(|| format!("invalid study config {}", args.config.display()))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| base.join(p);

    let corpus = load_corpus(&rel(&cfg.corpus))?;
    let oov: OovPolicy = cfg.oov.as_deref().unwrap_or("skip").parse()?;
    let lex_path = rel(&cfg.lexicon);
    let lex =
        Arc::new(Lexicon::load(&lex_path, oov).with_context(|| format!("cannot load lexicon {}", lex_path.display()))?);
    let pi = distribution(cfg.distribution.map(|p| rel(&p)).as_ref(), &lex)?;
    let vocab = cfg.vocab.map(|p| SubwordVocab::load(rel(&p))).transpose()?;

    let oracle = match (&cfg.oracle.rules, cfg.oracle.hypotheses) {
        (Some(_), true) => bail!("oracle: set either `rules` or `hypotheses = true`, not both"),
        (Some(r), false) => {
            let path = rel(r);
            let rules = RuleFile::load(&path).with_context(|| format!("cannot load rules {}", path.display()))?;
            let mut sim = SimulatedAsr::from_rule_file(rules, cfg.oracle.seed, Some(Arc::clone(&lex)))?;
            sim.calibrate(corpus.iter().map(|c| c.reference.as_str()));
            Oracle::Simulated(sim)
        }
        (None, true) => Oracle::Hypotheses,
        (None, false) => bail!("oracle: set `rules` or `hypotheses = true`"),
    };

    let strategies = match (args.strategies, cfg.strategies) {
        (Some(s), _) => s,
        (None, Some(names)) => names.iter().map(|n| n.parse()).collect::<voxrank::Result<_>>()?,
        (None, None) => Strategy::ALL.to_vec(),
    };
    let budget_cases = args.budget_cases.unwrap_or(cfg.budget_cases);
    let budget_seconds = args.budget_seconds.unwrap_or(cfg.budget_seconds);
    let budgets: Vec<Budget> = budget_cases
        .into_iter()
        .map(Budget::Cases)
        .chain(budget_seconds.into_iter().map(Budget::Seconds))
        .collect();
    let mut train = TrainConfig::default();
    let t = &cfg.train;
    train.iterations = t.iterations.unwrap_or(train.iterations);
    train.learning_rate = t.learning_rate.unwrap_or(train.learning_rate);
    train.l2 = t.l2.unwrap_or(train.l2);
    train.positive_weight = t.positive_weight.unwrap_or(train.positive_weight);

    let settings = StudySettings {
        split: SplitSpec::new(cfg.split.selection, cfg.split.validation, cfg.split.test, 0)?,
        seed_fraction: cfg.seed_fraction,
        strategies,
        budgets,
        seeds: args.seeds.unwrap_or(cfg.seeds),
        train,
        vocab,
        jobs: args.jobs.or(cfg.jobs).unwrap_or(1),
    };
    let out = match (args.out, cfg.output) {
        (Some(o), _) => o,
        (None, Some(o)) => rel(&o),
        (None, None) => bail!("no output directory: pass --out or set `output` in the config"),
    };
    let alpha = args.alpha.unwrap_or(cfg.alpha);

    log::info!(
        "study on {} ({} cases): {} strategies, {} budgets, {} seeds, {} jobs",
        corpus.name,
        corpus.len(),
        settings.strategies.len(),
        settings.budgets.len(),
        settings.seeds.len(),
        settings.jobs
    );
    let results = evalstats::run_study(&corpus, lex, &pi, &settings, &oracle)?;
    evalstats::write_report(&out, &results, alpha)
        .with_context(|| format!("cannot write report to {}", out.display()))?;
    log::info!("wrote {} results to {}", results.len(), out.display());
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let s = synth::generate(&SynthConfig {
        seed: args.seed,
        cases: args.cases,
        vocabulary: args.vocabulary,
        phonemes: args.phonemes,
        ..SynthConfig::default()
    })?;
    std::fs::write(&args.lexicon, &s.lexicon_text)
        .with_context(|| format!("cannot write {}", args.lexicon.display()))?;
    save_manifest(&args.manifest, s.corpus.cases(), None)
        .with_context(|| format!("cannot write {}", args.manifest.display()))?;
    if let Some(path) = &args.rules {
        if s.lexicon.id(&args.phoneme).is_none() {
            bail!("phoneme `{}` is not in the generated inventory", args.phoneme);
        }
        let rules = synth::default_rules(&args.phoneme, args.frequency_threshold, args.probability, args.seed);
        let text = toml::to_string(&rules).context("cannot serialize rules")?;
        std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Prioritize(a) => prioritize(a),
        Command::Select(a) => select(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::Study(a) => study(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
