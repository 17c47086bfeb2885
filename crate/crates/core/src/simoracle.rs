//! A deterministic simulated ASR system.
//!
//! Words of a reference are corrupted by the first matching [`ErrorRule`],
//! which fires with its probability. Each draw comes from a stream keyed by
//! `(seed, case id, word index)`, so results do not depend on the order or
//! the thread cases are transcribed in.
//!
//! Rule files are TOML:
//!
//! ```toml
//! seed = 7
//!
//! [[rule]]
//! trigger = "word-frequency-below"
//! threshold = 3
//! action = "substitute"
//! probability = 0.9
//!
//! [[rule]]
//! trigger = "contains-phoneme"
//! phoneme = "ZH"
//! action = "delete"
//! probability = 0.5
//!
//! [confusion]
//! dog = "dock"
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::normalize;
use crate::corpus::{Corpus, TestCase};
use crate::error::{Error, Result};
use crate::hashing::{keyed, unit_f64};
use crate::lexicon::Lexicon;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "trigger", rename_all = "kebab-case")]
pub enum Trigger {
    ContainsPhoneme { phoneme: String },
    WordFrequencyBelow { threshold: u64 },
    WordLengthAbove { length: usize },
    WordInList { words: BTreeSet<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    /// Replace with the confusion-table entry, or a perturbed spelling.
    Substitute,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRule {
    #[serde(flatten)]
    pub trigger: Trigger,
    pub action: Action,
    pub probability: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleFile {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, rename = "rule")]
    pub rules: Vec<ErrorRule>,
    #[serde(default)]
    pub confusion: BTreeMap<String, String>,
}

impl RuleFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            message: e.message().to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedAsr {
    pub rules: Vec<ErrorRule>,
    pub confusion: BTreeMap<String, String>,
    pub seed: u64,
    frequencies: HashMap<String, u64>,
    lexicon: Option<Arc<Lexicon>>,
}

/// Hypothesis plus the reference positions that were corrupted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcription {
    pub hypothesis: String,
    pub corrupted: Vec<usize>,
}

/// Shift the middle character to the next letter so the spelling always changes.
fn perturb(word: &str) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let mid = chars.len() / 2;
    chars[mid] = match chars[mid] {
        'z' => 'a',
        'Z' => 'A',
        '9' => '0',
        c if c.is_ascii_alphanumeric() => (c as u8 + 1) as char,
        _ => 'x',
    };
    chars.into_iter().collect()
}

impl SimulatedAsr {
    pub fn new(
        rules: Vec<ErrorRule>,
        confusion: BTreeMap<String, String>,
        seed: u64,
        lexicon: Option<Arc<Lexicon>>,
    ) -> Result<Self> {
        for rule in &rules {
            if !(0.0..=1.0).contains(&rule.probability) {
                return Err(Error::invalid(format!(
                    "rule probability {} outside [0, 1]",
                    rule.probability
                )));
            }
            match &rule.trigger {
                Trigger::ContainsPhoneme { phoneme } => {
                    let lex = lexicon
                        .as_ref()
                        .ok_or_else(|| Error::invalid("contains-phoneme rules need a lexicon"))?;
                    if lex.id(phoneme).is_none() {
                        return Err(Error::invalid(format!("phoneme `{phoneme}` not in the lexicon")));
                    }
                }
                Trigger::WordInList { words } if words.is_empty() => {
                    return Err(Error::invalid("word-in-list rule has no words"));
                }
                _ => {}
            }
        }
        for (from, to) in &confusion {
            if normalize(to).len() != 1 || normalize(from).len() != 1 {
                return Err(Error::invalid(format!(
                    "confusion `{from}` -> `{to}` must map one word to one word"
                )));
            }
        }
        let rules = rules
            .into_iter()
            .map(|mut r| {
                if let Trigger::WordInList { words } = &mut r.trigger {
                    *words = words.iter().map(|w| w.to_lowercase()).collect();
                }
                r
            })
            .collect();
        Ok(SimulatedAsr {
            rules,
            confusion,
            seed,
            frequencies: HashMap::new(),
            lexicon,
        })
    }

    pub fn from_rule_file(file: RuleFile, seed: Option<u64>, lexicon: Option<Arc<Lexicon>>) -> Result<Self> {
        let seed = seed.or(file.seed).unwrap_or(0);
        Self::new(file.rules, file.confusion, seed, lexicon)
    }

    /// Word frequencies for `word-frequency-below` triggers.
    pub fn calibrate<'a>(&mut self, texts: impl IntoIterator<Item = &'a str>) {
        self.frequencies = crate::predictors::features::word_counts(texts);
    }

    pub fn frequency(&self, word: &str) -> u64 {
        self.frequencies.get(word).copied().unwrap_or(0)
    }

    fn matches(&self, trigger: &Trigger, word: &str) -> bool {
        match trigger {
            Trigger::ContainsPhoneme { phoneme } => {
                let lex = self.lexicon.as_ref().expect("checked at construction");
                let target = lex.id(phoneme).expect("checked at construction");
                lex.word_phonemes(word).is_some_and(|ids| ids.contains(&target))
            }
            Trigger::WordFrequencyBelow { threshold } => self.frequency(word) < *threshold,
            Trigger::WordLengthAbove { length } => word.chars().count() > *length,
            Trigger::WordInList { words } => words.contains(word),
        }
    }

    /// The first rule whose trigger matches `word`.
    pub fn rule_for(&self, word: &str) -> Option<&ErrorRule> {
        self.rules.iter().find(|r| self.matches(&r.trigger, word))
    }

    /// Probability that `word` is corrupted.
    pub fn error_probability(&self, word: &str) -> f64 {
        self.rule_for(word).map_or(0.0, |r| r.probability)
    }

    pub fn transcribe_detailed(&self, case: &TestCase) -> Transcription {
        let words = normalize(&case.reference);
        let mut out = Vec::with_capacity(words.len());
        let mut corrupted = Vec::new();
        for (i, word) in words.iter().enumerate() {
            let fired = self.rule_for(word).and_then(|rule| {
                let u = unit_f64(keyed(self.seed, &case.id, i as u64));
                (u < rule.probability).then_some(rule.action)
            });
            match fired {
                None => out.push(word.clone()),
                Some(Action::Delete) => corrupted.push(i),
                Some(Action::Substitute) => {
                    corrupted.push(i);
                    let replacement = self
                        .confusion
                        .get(word)
                        .filter(|r| *r != word)
                        .cloned()
                        .unwrap_or_else(|| perturb(word));
                    out.push(replacement);
                }
            }
        }
        Transcription {
            hypothesis: out.join(" "),
            corrupted,
        }
    }

    pub fn transcribe(&self, case: &TestCase) -> String {
        self.transcribe_detailed(case).hypothesis
    }

    /// Fill in hypotheses for every case; order and other fields unchanged.
    pub fn transcribe_corpus(&self, corpus: &Corpus) -> Corpus {
        let cases: Vec<TestCase> = corpus
            .cases()
            .par_iter()
            .map(|c| {
                let mut c = c.clone();
                c.hypothesis = Some(self.transcribe(&c));
                c
            })
            .collect();
        Corpus::new(corpus.name.clone(), cases).expect("validated corpus stays valid")
    }

    pub fn transcribe_cases(&self, cases: &[TestCase]) -> Vec<TestCase> {
        cases
            .par_iter()
            .map(|c| {
                let mut c = c.clone();
                c.hypothesis = Some(self.transcribe(&c));
                c
            })
            .collect()
    }

    /// Expected word error rate on `cases`, optionally treating the words in
    /// `learned` as never corrupted.
    pub fn expected_error_rate(&self, cases: &[TestCase], learned: Option<&BTreeSet<String>>) -> f64 {
        let mut expected = 0.0;
        let mut words = 0usize;
        for case in cases {
            for w in normalize(&case.reference) {
                words += 1;
                if learned.is_some_and(|l| l.contains(&w)) {
                    continue;
                }
                expected += self.error_probability(&w);
            }
        }
        if words == 0 {
            0.0
        } else {
            expected / words as f64
        }
    }
}
