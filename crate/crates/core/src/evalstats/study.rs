//! End-to-end prioritization study over strategies, budgets and seeds.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extract_rq3_features, prefix_error_rates, rq2_relative_improvement};
use crate::alignment::{normalize, word_labels_for};
use crate::corpus::{sample_seed_set, split_corpus, Corpus, SplitSpec, TestCase};
use crate::error::{Error, Result};
use crate::hashing::keyed;
use crate::lexicon::Lexicon;
use crate::predictors::features::{CorpusStats, TokenFeaturizer};
use crate::predictors::logistic::TrainConfig;
use crate::predictors::tokenize::SubwordVocab;
use crate::predictors::{
    labeled_sequences, phoneme_examples, sentence_outcomes, train_phoneme_predictor, train_sentence_predictor,
    train_word_predictor,
};
use crate::prioritizers::{
    duration_matched_budget, prioritize_pep, prioritize_pep_d, prioritize_phoneme_rich, prioritize_prophet,
    prioritize_random, prioritize_sentence, select_within_budget, DesiredDistribution, RankedSuite, Strategy,
};
use crate::simoracle::SimulatedAsr;

/// A time budget, given directly or as the duration of a random sample of
/// `k` cases from the pool being prioritized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Cases(usize),
    Seconds(f64),
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Cases(k) => write!(f, "k{k}"),
            Budget::Seconds(s) => write!(f, "s{s}"),
        }
    }
}

/// Where hypotheses come from.
pub enum Oracle {
    Simulated(SimulatedAsr),
    /// Use the `hypothesis` already stored on each case.
    Hypotheses,
}

impl Oracle {
    fn transcribe(&self, cases: &[TestCase]) -> Result<Vec<TestCase>> {
        match self {
            Oracle::Simulated(sim) => Ok(sim.transcribe_cases(cases)),
            Oracle::Hypotheses => {
                if let Some(c) = cases.iter().find(|c| c.hypothesis.is_none()) {
                    return Err(Error::invalid(format!(
                        "test case `{}` has no hypothesis and no simulated oracle is configured",
                        c.id
                    )));
                }
                Ok(cases.to_vec())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudySettings {
    pub split: SplitSpec,
    pub seed_fraction: f64,
    pub strategies: Vec<Strategy>,
    pub budgets: Vec<Budget>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub vocab: Option<SubwordVocab>,
    /// Worker threads; 0 or 1 runs on a single thread.
    pub jobs: usize,
}

impl StudySettings {
    pub fn new(strategies: Vec<Strategy>, budgets: Vec<Budget>, seeds: Vec<u64>) -> Self {
        StudySettings {
            split: SplitSpec::standard(0),
            seed_fraction: 0.1,
            strategies,
            budgets,
            seeds,
            train: TrainConfig::default(),
            vocab: None,
            jobs: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::invalid("study needs at least one strategy"));
        }
        if self.budgets.is_empty() {
            return Err(Error::invalid("study needs at least one budget"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("study needs at least one seed"));
        }
        for b in &self.budgets {
            if let Budget::Seconds(s) = b {
                if !(*s >= 0.0 && s.is_finite()) {
                    return Err(Error::invalid(format!("budget of {s} seconds is invalid")));
                }
            }
        }
        self.split.validate()
    }
}

/// One (strategy, budget, seed) cell of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub dataset: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub budget: String,
    pub budget_s: f64,
    pub used_s: f64,
    pub prefix_ids: Vec<String>,
    pub wer: f64,
    pub cer: f64,
    /// Prefix WER, triphone distance to uniform, submodular utility.
    pub features: [f64; 3],
    /// Relative drop of the simulator's expected error rate on the held-out
    /// cases (validation and test) once every word corrupted in the prefix is
    /// treated as learned. Only available with a simulated oracle.
    pub proxy_improvement: Option<f64>,
}

/// Train the predictors the requested strategies need on the transcribed
/// seed set, then rank the partition's remainder once per strategy.
fn rank_all(
    part: &Partition,
    seed_set: &[TestCase],
    lex: &Arc<Lexicon>,
    pi: &DesiredDistribution,
    settings: &StudySettings,
    seed: u64,
) -> Result<Vec<(Strategy, RankedSuite)>> {
    let remainder = part.remainder.cases();
    let wants = |s: Strategy| settings.strategies.contains(&s);
    let cfg = TrainConfig { seed, ..settings.train };
    let stats = CorpusStats::from_texts(part.selection.iter().map(|c| c.reference.as_str()), Some(lex));
    let featurizer = TokenFeaturizer::new(stats).with_lexicon(Arc::clone(lex));

    let word = if wants(Strategy::Prophet) {
        let data = labeled_sequences(seed_set, settings.vocab.as_ref())?;
        Some(train_word_predictor(
            &data,
            featurizer.clone(),
            settings.vocab.clone(),
            &cfg,
        )?)
    } else {
        None
    };
    let sentence = if wants(Strategy::SentenceFailure) {
        Some(train_sentence_predictor(
            &sentence_outcomes(seed_set)?,
            featurizer.clone(),
            &cfg,
        )?)
    } else {
        None
    };
    let phoneme = if wants(Strategy::Pep) || wants(Strategy::PepD) {
        Some(train_phoneme_predictor(&phoneme_examples(lex, seed_set)?, &cfg)?)
    } else {
        None
    };

    let mut rankings = Vec::with_capacity(settings.strategies.len());
    for &strategy in &settings.strategies {
        let ranked = match strategy {
            Strategy::Random => prioritize_random(remainder, part.budget_seed),
            Strategy::PhonemeRich => prioritize_phoneme_rich(remainder, lex, pi),
            Strategy::Pep => prioritize_pep(remainder, phoneme.as_ref().expect("trained"), lex),
            Strategy::PepD => prioritize_pep_d(remainder, phoneme.as_ref().expect("trained"), lex, pi),
            Strategy::SentenceFailure => prioritize_sentence(remainder, sentence.as_ref().expect("trained")),
            Strategy::Prophet => prioritize_prophet(remainder, word.as_ref().expect("trained"))?,
        };
        rankings.push((strategy, ranked));
    }
    Ok(rankings)
}

fn learned_words(prefix: &[TestCase]) -> BTreeSet<String> {
    let mut learned = BTreeSet::new();
    for case in prefix {
        let hyp = case.hypothesis.as_deref().unwrap_or_default();
        let labels = word_labels_for(&case.reference, hyp);
        for (w, &l) in normalize(&case.reference).into_iter().zip(&labels.labels) {
            if l == 1 {
                learned.insert(w);
            }
        }
    }
    learned
}

/// The corpus subsets a study uses for one seed.
#[derive(Debug, Clone)]
pub struct Partition {
    pub selection: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
    /// Transcribed to train the predictors.
    pub seed_set: Corpus,
    /// The pool that every strategy ranks.
    pub remainder: Corpus,
    /// Seed of the random ranking and of duration-matched budgets.
    pub budget_seed: u64,
}

pub fn partition(corpus: &Corpus, settings: &StudySettings, seed: u64) -> Result<Partition> {
    let split = SplitSpec { seed, ..settings.split };
    let (selection, validation, test) = split_corpus(corpus, &split)?;
    let (seed_set, remainder) = sample_seed_set(&selection, settings.seed_fraction, keyed(seed, "seed-set", 0))?;
    if seed_set.is_empty() {
        return Err(Error::Empty(
            "seed set is empty; increase the corpus size or seed fraction",
        ));
    }
    Ok(Partition {
        selection,
        validation,
        test,
        seed_set,
        remainder,
        budget_seed: keyed(seed, "budget", 0),
    })
}

fn run_seed(
    corpus: &Corpus,
    lex: &Arc<Lexicon>,
    pi: &DesiredDistribution,
    settings: &StudySettings,
    oracle: &Oracle,
    seed: u64,
) -> Result<Vec<StudyResult>> {
    let part = partition(corpus, settings, seed)?;
    let seed_set = oracle.transcribe(part.seed_set.cases())?;
    let rankings = rank_all(&part, &seed_set, lex, pi, settings, seed)?;

    let held_out: Vec<TestCase> = part.validation.iter().chain(part.test.iter()).cloned().collect();
    let baseline = match oracle {
        Oracle::Simulated(sim) => Some(sim.expected_error_rate(&held_out, None)),
        Oracle::Hypotheses => None,
    };

    let mut out = Vec::new();
    for (strategy, ranked) in &rankings {
        for budget in &settings.budgets {
            let budget_s = match *budget {
                Budget::Cases(k) => duration_matched_budget(part.remainder.cases(), k, part.budget_seed)?,
                Budget::Seconds(s) => s,
            };
            let selection = select_within_budget(ranked, budget_s)?;
            if selection.selected.is_empty() {
                log::warn!("{strategy} at budget {budget} (seed {seed}) selected no cases");
            }
            let prefix = oracle.transcribe(&selection.selected)?;
            let (wer, cer) = prefix_error_rates(&prefix)?;
            let features = extract_rq3_features(&prefix, lex, pi)?;
            let proxy_improvement = match (oracle, baseline) {
                (Oracle::Simulated(sim), Some(before)) if before > 0.0 => {
                    let after = sim.expected_error_rate(&held_out, Some(&learned_words(&prefix)));
                    Some(rq2_relative_improvement(before, after)?)
                }
                (Oracle::Simulated(_), _) => Some(0.0),
                _ => None,
            };
            out.push(StudyResult {
                dataset: corpus.name.clone(),
                strategy: *strategy,
                seed,
                budget: budget.to_string(),
                budget_s,
                used_s: selection.used_s,
                prefix_ids: prefix.iter().map(|c| c.id.clone()).collect(),
                wer,
                cer,
                features,
                proxy_improvement,
            });
        }
    }
    Ok(out)
}

fn strategy_rank(s: Strategy) -> usize {
    Strategy::ALL.iter().position(|&x| x == s).unwrap_or(usize::MAX)
}

/// Run every (strategy, budget, seed) cell. For each seed the corpus is split,
/// a seed set is transcribed to train the predictors, the remainder is ranked
/// once per strategy and each budget takes the fitting prefix. Results are
/// sorted by (strategy, budget order, seed) and do not depend on `jobs`.
pub fn run_study(
    corpus: &Corpus,
    lex: Arc<Lexicon>,
    pi: &DesiredDistribution,
    settings: &StudySettings,
    oracle: &Oracle,
) -> Result<Vec<StudyResult>> {
    settings.validate()?;
    if pi.0.len() != lex.inventory_size() {
        return Err(Error::LengthMismatch {
            what: "desired distribution vs phoneme inventory".into(),
            expected: lex.inventory_size(),
            actual: pi.0.len(),
        });
    }
    if matches!(oracle, Oracle::Hypotheses) {
        oracle.transcribe(corpus.cases())?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let per_seed: Vec<Vec<StudyResult>> = pool.install(|| {
        settings
            .seeds
            .par_iter()
            .map(|&seed| {
                log::info!("study seed {seed}: training and ranking");
                run_seed(corpus, &lex, pi, settings, oracle, seed)
            })
            .collect::<Result<_>>()
    })?;

    let budget_order: Vec<String> = settings.budgets.iter().map(|b| b.to_string()).collect();
    let mut results: Vec<StudyResult> = per_seed.into_iter().flatten().collect();
    results.sort_by_key(|r| {
        (
            strategy_rank(r.strategy),
            budget_order.iter().position(|b| *b == r.budget),
            r.seed,
        )
    });
    Ok(results)
}
