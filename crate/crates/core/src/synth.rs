//! Synthetic lexicons and corpora with Zipf-skewed phoneme and word usage.
//!
//! Used by the test suites and the `synth` subcommand to build desk-scale
//! studies without real data.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TestCase};
use crate::error::Result;
use crate::lexicon::{Lexicon, OovPolicy};
use crate::simoracle::{Action, ErrorRule, RuleFile, Trigger};

/// Grapheme and phoneme symbol for each synthetic phoneme, most frequent first.
const PHONES: [(&str, &str); 30] = [
    ("a", "AA"),
    ("t", "T"),
    ("n", "N"),
    ("e", "EH"),
    ("s", "S"),
    ("r", "R"),
    ("i", "IH"),
    ("l", "L"),
    ("d", "D"),
    ("o", "OW"),
    ("k", "K"),
    ("m", "M"),
    ("u", "UW"),
    ("p", "P"),
    ("b", "B"),
    ("f", "F"),
    ("g", "G"),
    ("w", "W"),
    ("h", "HH"),
    ("v", "V"),
    ("y", "Y"),
    ("sh", "SH"),
    ("ch", "CH"),
    ("th", "TH"),
    ("ng", "NG"),
    ("j", "JH"),
    ("oy", "OY"),
    ("aw", "AW"),
    ("z", "Z"),
    ("zh", "ZH"),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// Inventory size, at most 30.
    pub phonemes: usize,
    pub vocabulary: usize,
    pub cases: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub min_word_phonemes: usize,
    pub max_word_phonemes: usize,
    /// Zipf exponent for phoneme use inside words.
    pub phoneme_skew: f64,
    /// Zipf exponent for word use inside sentences.
    pub word_skew: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            phonemes: 30,
            vocabulary: 1500,
            cases: 200,
            min_words: 4,
            max_words: 14,
            min_word_phonemes: 2,
            max_word_phonemes: 6,
            phoneme_skew: 1.0,
            word_skew: 1.05,
        }
    }
}

pub struct SynthCorpus {
    /// Pronunciation file contents.
    pub lexicon_text: String,
    pub lexicon: Lexicon,
    pub corpus: Corpus,
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / (r as f64).powf(s))).expect("positive weights")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.phonemes.clamp(2, PHONES.len());
    let phone_dist = zipf(m, cfg.phoneme_skew);

    let mut seen = HashSet::new();
    let mut words: Vec<(String, Vec<&str>)> = Vec::with_capacity(cfg.vocabulary);
    let mut attempts = 0;
    while words.len() < cfg.vocabulary && attempts < cfg.vocabulary * 50 {
        attempts += 1;
        let len = rng.random_range(cfg.min_word_phonemes..=cfg.max_word_phonemes.max(cfg.min_word_phonemes));
        let picks: Vec<usize> = (0..len).map(|_| phone_dist.sample(&mut rng)).collect();
        let spelling: String = picks.iter().map(|&p| PHONES[p].0).collect();
        if seen.insert(spelling.clone()) {
            words.push((spelling, picks.iter().map(|&p| PHONES[p].1).collect()));
        }
    }
    let mut lexicon_text = String::from(";;; synthetic pronouncing dictionary\n");
    for (w, phones) in &words {
        lexicon_text.push_str(&w.to_uppercase());
        lexicon_text.push_str("  ");
        lexicon_text.push_str(&phones.join(" "));
        lexicon_text.push('\n');
    }
    let lexicon = Lexicon::parse(&lexicon_text, OovPolicy::Skip)?;

    let word_dist = zipf(words.len(), cfg.word_skew);
    let cases = (0..cfg.cases)
        .map(|i| {
            let n = rng.random_range(cfg.min_words..=cfg.max_words.max(cfg.min_words));
            let chosen: Vec<usize> = (0..n).map(|_| word_dist.sample(&mut rng)).collect();
            let text = chosen
                .iter()
                .map(|&w| words[w].0.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let phonemes: usize = chosen.iter().map(|&w| words[w].1.len()).sum();
            // about 80 ms per phoneme plus a short pause per word
            let secs = 0.3 + 0.08 * phonemes as f64 + 0.05 * n as f64;
            TestCase::new(format!("syn{:05}", i), text, (secs * 100.0).round() / 100.0)
        })
        .collect();
    let corpus = Corpus::new(format!("synthetic-{}", cfg.seed), cases)?;
    Ok(SynthCorpus {
        lexicon_text,
        lexicon,
        corpus,
    })
}

/// Corrupt low-frequency words and words containing `phoneme`, each with
/// probability `p`, by substitution.
pub fn default_rules(phoneme: &str, frequency_threshold: u64, p: f64, seed: u64) -> RuleFile {
    RuleFile {
        seed: Some(seed),
        rules: vec![
            ErrorRule {
                trigger: Trigger::ContainsPhoneme {
                    phoneme: phoneme.to_string(),
                },
                action: Action::Substitute,
                probability: p,
            },
            ErrorRule {
                trigger: Trigger::WordFrequencyBelow {
                    threshold: frequency_threshold,
                },
                action: Action::Substitute,
                probability: p,
            },
        ],
        confusion: Default::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Unit;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            cases: 50,
            vocabulary: 200,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.lexicon_text, b.lexicon_text);
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.corpus.len(), 50);
    }

    #[test]
    fn phoneme_usage_is_skewed() {
        let s = generate(&SynthConfig::default()).unwrap();
        let h = s.lexicon.histogram(s.corpus.iter(), Unit::Phoneme);
        assert!(h.count("AA") > 5 * h.count("ZH").max(1));
        // every word of every case is in the lexicon
        for c in s.corpus.iter() {
            assert!(s.lexicon.phonemize(&c.reference).oov_words.is_empty());
        }
    }
}
