//! Error predictors at three granularities and the error score.
//!
//! * [`WordErrorPredictor`]: probability that each (sub)word token is misrecognized.
//! * [`SentenceFailurePredictor`]: probability that a text is not transcribed exactly.
//! * [`PhonemeErrorPredictor`]: probability that each phoneme is misrecognized.
//!
//! All three are logistic models over hashed features; see [`features`].
//! A heavier token scorer can be plugged in through [`external`].

pub mod external;
pub mod features;
pub mod logistic;
pub mod tokenize;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::alignment::{normalize, word_labels_for, WordLabels};
use crate::corpus::TestCase;
use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, BOUNDARY};

pub use features::{CorpusStats, TokenFeaturizer};
pub use logistic::{LogisticModel, TrainConfig, TrainReport};
pub use tokenize::{propagate_labels, tokenize, LabeledSequence, SubwordVocab, TokenSequence, IGNORE_LABEL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub iterations: usize,
    pub corpus_fingerprint: String,
    pub report: TrainReport,
}

/// Mean token error probability: the Prophet ranking key.
pub fn error_score(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Empty("error score needs at least one token probability"));
    }
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}

fn hypothesis_of(case: &TestCase) -> Result<&str> {
    case.hypothesis
        .as_deref()
        .ok_or_else(|| Error::invalid(format!("test case `{}` has no hypothesis", case.id)))
}

/// Token-labeled training data from transcribed cases.
pub fn labeled_sequences(cases: &[TestCase], vocab: Option<&SubwordVocab>) -> Result<Vec<LabeledSequence>> {
    cases
        .iter()
        .map(|case| {
            let labels = word_labels_for(&case.reference, hypothesis_of(case)?);
            let seq = tokenize::tokenize(&case.reference, vocab);
            propagate_labels(&labels, &seq)
        })
        .collect()
}

/// `(reference, failed)` pairs; a case fails iff its alignment distance is nonzero.
pub fn sentence_outcomes(cases: &[TestCase]) -> Result<Vec<(String, bool)>> {
    cases
        .iter()
        .map(|case| {
            let hyp = hypothesis_of(case)?;
            let failed = normalize(&case.reference) != normalize(hyp);
            Ok((case.reference.clone(), failed))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordErrorPredictor {
    pub feature_spec: String,
    pub featurizer: TokenFeaturizer,
    pub vocab: Option<SubwordVocab>,
    pub model: LogisticModel,
    pub meta: TrainingMeta,
}

pub fn train_word_predictor(
    data: &[LabeledSequence],
    featurizer: TokenFeaturizer,
    vocab: Option<SubwordVocab>,
    config: &TrainConfig,
) -> Result<WordErrorPredictor> {
    if data.is_empty() {
        return Err(Error::Empty("no labeled sequences"));
    }
    let mut examples = Vec::new();
    for seq in data {
        let feats = featurizer.token_features(&seq.seq);
        let labels: Vec<i32> = seq.supervised().map(|(_, l)| l).collect();
        if labels.len() != feats.len() {
            return Err(Error::LengthMismatch {
                what: "supervised labels vs content tokens".into(),
                expected: feats.len(),
                actual: labels.len(),
            });
        }
        examples.extend(feats.into_iter().zip(labels).map(|(x, l)| (x, f64::from(l))));
    }
    if examples.is_empty() {
        return Err(Error::Empty("labeled sequences contain no supervised tokens"));
    }
    let (model, report) = logistic::train(&examples, config)?;
    Ok(WordErrorPredictor {
        feature_spec: features::FEATURE_SPEC.to_string(),
        meta: TrainingMeta {
            seed: config.seed,
            iterations: report.iterations,
            corpus_fingerprint: featurizer.stats.fingerprint(),
            report,
        },
        featurizer,
        vocab,
        model,
    })
}

impl WordErrorPredictor {
    /// One probability per non-sentinel token of `tokenize(text)`.
    pub fn predict_token_probs(&self, text: &str) -> Vec<f64> {
        let seq = tokenize::tokenize(text, self.vocab.as_ref());
        self.predict_sequence(&seq)
    }

    pub fn predict_sequence(&self, seq: &TokenSequence) -> Vec<f64> {
        self.featurizer
            .token_features(seq)
            .iter()
            .map(|x| self.model.predict(x))
            .collect()
    }

    pub fn set_lexicon(&mut self, lexicon: Option<Arc<Lexicon>>) {
        self.featurizer.set_lexicon(lexicon);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceFailurePredictor {
    pub feature_spec: String,
    pub featurizer: TokenFeaturizer,
    pub model: LogisticModel,
    pub meta: TrainingMeta,
}

pub fn train_sentence_predictor(
    cases: &[(String, bool)],
    featurizer: TokenFeaturizer,
    config: &TrainConfig,
) -> Result<SentenceFailurePredictor> {
    if cases.is_empty() {
        return Err(Error::Empty("no labeled sentences"));
    }
    let examples: Vec<_> = cases
        .iter()
        .map(|(text, failed)| {
            let seq = tokenize::tokenize(text, None);
            (featurizer.sentence_features(&seq), if *failed { 1.0 } else { 0.0 })
        })
        .collect();
    let (model, report) = logistic::train(&examples, config)?;
    Ok(SentenceFailurePredictor {
        feature_spec: format!("sentence-pooled {}", features::FEATURE_SPEC),
        meta: TrainingMeta {
            seed: config.seed,
            iterations: report.iterations,
            corpus_fingerprint: featurizer.stats.fingerprint(),
            report,
        },
        featurizer,
        model,
    })
}

impl SentenceFailurePredictor {
    pub fn predict_failure_prob(&self, text: &str) -> f64 {
        let seq = tokenize::tokenize(text, None);
        self.model.predict(&self.featurizer.sentence_features(&seq))
    }

    pub fn set_lexicon(&mut self, lexicon: Option<Arc<Lexicon>>) {
        self.featurizer.set_lexicon(lexicon);
    }
}

/// Per-phoneme labels: each phoneme inherits its source word's label. Words
/// without a pronunciation contribute nothing.
pub fn derive_phoneme_labels(lex: &Lexicon, reference: &str, word_labels: &WordLabels) -> Result<Vec<u8>> {
    let words = normalize(reference);
    if words.len() != word_labels.len() {
        return Err(Error::LengthMismatch {
            what: "word labels vs reference words".into(),
            expected: words.len(),
            actual: word_labels.len(),
        });
    }
    let ph = lex.phonemize_words(&words);
    Ok(ph.word_of_phoneme.iter().map(|&w| word_labels.labels[w]).collect())
}

/// A phoneme sequence with word boundaries and per-phoneme labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhonemeExample {
    pub phonemes: Vec<String>,
    pub word_of_phoneme: Vec<usize>,
    pub labels: Vec<u8>,
}

/// Triphone-context features for every phoneme; contexts stop at word edges.
fn phoneme_feature_rows(phonemes: &[String], word_of_phoneme: &[usize]) -> Vec<logistic::SparseVec> {
    (0..phonemes.len())
        .map(|k| {
            let same_word = |j: usize| word_of_phoneme[j] == word_of_phoneme[k];
            let left = k
                .checked_sub(1)
                .filter(|&j| same_word(j))
                .map_or(BOUNDARY, |j| phonemes[j].as_str());
            let right = Some(k + 1)
                .filter(|&j| j < phonemes.len() && same_word(j))
                .map_or(BOUNDARY, |j| phonemes[j].as_str());
            features::phoneme_context_features(left, &phonemes[k], right)
        })
        .collect()
}

pub fn phoneme_examples(lex: &Lexicon, cases: &[TestCase]) -> Result<Vec<PhonemeExample>> {
    cases
        .iter()
        .map(|case| {
            let labels = word_labels_for(&case.reference, hypothesis_of(case)?);
            let ph = lex.phonemize(&case.reference);
            let phon_labels = derive_phoneme_labels(lex, &case.reference, &labels)?;
            Ok(PhonemeExample {
                phonemes: ph.phonemes.iter().map(|&p| lex.symbol(p).to_string()).collect(),
                word_of_phoneme: ph.word_of_phoneme,
                labels: phon_labels,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeErrorPredictor {
    pub feature_spec: String,
    pub model: LogisticModel,
    pub meta: TrainingMeta,
}

pub fn train_phoneme_predictor(data: &[PhonemeExample], config: &TrainConfig) -> Result<PhonemeErrorPredictor> {
    if data.is_empty() {
        return Err(Error::Empty("no phoneme examples"));
    }
    let mut examples = Vec::new();
    for ex in data {
        if ex.labels.len() != ex.phonemes.len() || ex.word_of_phoneme.len() != ex.phonemes.len() {
            return Err(Error::LengthMismatch {
                what: "phoneme labels".into(),
                expected: ex.phonemes.len(),
                actual: ex.labels.len(),
            });
        }
        let rows = phoneme_feature_rows(&ex.phonemes, &ex.word_of_phoneme);
        examples.extend(rows.into_iter().zip(&ex.labels).map(|(x, &l)| (x, f64::from(l))));
    }
    if examples.is_empty() {
        return Err(Error::Empty("phoneme examples contain no phonemes"));
    }
    let (model, report) = logistic::train(&examples, config)?;
    Ok(PhonemeErrorPredictor {
        feature_spec: "phoneme-context/v1: center, left, right, bigram and triphone contexts".into(),
        meta: TrainingMeta {
            seed: config.seed,
            iterations: report.iterations,
            corpus_fingerprint: String::new(),
            report,
        },
        model,
    })
}

impl PhonemeErrorPredictor {
    /// One probability per phoneme of `lex.phonemize(text)`.
    pub fn predict_phoneme_probs(&self, lex: &Lexicon, text: &str) -> Vec<f64> {
        let ph = lex.phonemize(text);
        let syms: Vec<String> = ph.phonemes.iter().map(|&p| lex.symbol(p).to_string()).collect();
        phoneme_feature_rows(&syms, &ph.word_of_phoneme)
            .iter()
            .map(|x| self.model.predict(x))
            .collect()
    }
}

/// A trained model on disk, tagged by kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Word(WordErrorPredictor),
    Sentence(SentenceFailurePredictor),
    Phoneme(PhonemeErrorPredictor),
}

impl ModelFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut file: ModelFile = serde_json::from_str(&text)?;
        match &mut file {
            ModelFile::Word(p) => p.model.index(),
            ModelFile::Sentence(p) => p.model.index(),
            ModelFile::Phoneme(p) => p.model.index(),
        }
        Ok(file)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelFile::Word(_) => "word",
            ModelFile::Sentence(_) => "sentence",
            ModelFile::Phoneme(_) => "phoneme",
        }
    }
}
