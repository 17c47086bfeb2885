//! Hashed token features for the word- and sentence-level error models.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::hashing::fnv1a;
use crate::lexicon::Lexicon;
use crate::predictors::logistic::SparseVec;
use crate::predictors::tokenize::TokenSequence;

pub const FEATURE_SPEC: &str = "token-features/v1: char 1-3grams, length, log word frequency, \
rarest phoneme log frequency, phoneme unigrams, position bucket; same for left/right neighbors";

/// Number of hash buckets (2^20).
const BUCKETS: u32 = 1 << 20;

fn bucket(name: &str) -> u32 {
    (fnv1a(name.as_bytes()) % u64::from(BUCKETS)) as u32
}

/// Word and phoneme frequencies of an unlabeled reference corpus, plus the
/// pronunciations of the words it contains.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub word_counts: BTreeMap<String, u64>,
    pub phoneme_counts: BTreeMap<String, u64>,
    pub pronunciations: BTreeMap<String, Vec<String>>,
    pub max_word_count: u64,
    pub max_phoneme_count: u64,
}

impl CorpusStats {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>, lex: Option<&Lexicon>) -> Self {
        let mut stats = CorpusStats::default();
        for text in texts {
            for word in crate::alignment::normalize(text) {
                if let Some(lex) = lex {
                    if !stats.pronunciations.contains_key(&word) {
                        if let Some(ids) = lex.word_phonemes(&word) {
                            let syms = ids.iter().map(|&p| lex.symbol(p).to_string()).collect();
                            stats.pronunciations.insert(word.clone(), syms);
                        }
                    }
                    if let Some(p) = stats.pronunciations.get(&word) {
                        for sym in p {
                            *stats.phoneme_counts.entry(sym.clone()).or_default() += 1;
                        }
                    }
                }
                *stats.word_counts.entry(word).or_default() += 1;
            }
        }
        stats.max_word_count = stats.word_counts.values().copied().max().unwrap_or(0);
        stats.max_phoneme_count = stats.phoneme_counts.values().copied().max().unwrap_or(0);
        stats
    }

    /// A fingerprint of the counts, stored with trained models.
    pub fn fingerprint(&self) -> String {
        let mut h = crate::hashing::fnv1a(b"corpus-stats");
        for (w, c) in &self.word_counts {
            h = crate::hashing::fnv1a_extend(h, w.as_bytes());
            h = crate::hashing::fnv1a_extend(h, &c.to_le_bytes());
        }
        format!("{h:016x}")
    }
}

/// Log-scaled frequency in [0, 1].
fn log_scale(count: u64, max: u64) -> f64 {
    if max == 0 {
        0.0
    } else {
        (1.0 + count as f64).ln() / (1.0 + max as f64).ln()
    }
}

fn freq_bucket(count: u64) -> u32 {
    (64 - (count + 1).leading_zeros()).min(8)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TokenFeaturizer {
    pub stats: CorpusStats,
    /// Fallback for words absent from `stats.pronunciations`.
    #[serde(skip)]
    lexicon: Option<Arc<Lexicon>>,
}

impl PartialEq for TokenFeaturizer {
    fn eq(&self, other: &Self) -> bool {
        self.stats == other.stats
    }
}

/// Named features before hashing.
type Named = Vec<(String, f64)>;

impl TokenFeaturizer {
    pub fn new(stats: CorpusStats) -> Self {
        TokenFeaturizer { stats, lexicon: None }
    }

    pub fn with_lexicon(mut self, lexicon: Arc<Lexicon>) -> Self {
        self.lexicon = Some(lexicon);
        self
    }

    pub fn set_lexicon(&mut self, lexicon: Option<Arc<Lexicon>>) {
        self.lexicon = lexicon;
    }

    fn pronunciation(&self, word: &str) -> Option<Vec<String>> {
        if let Some(p) = self.stats.pronunciations.get(word) {
            return Some(p.clone());
        }
        let lex = self.lexicon.as_ref()?;
        let ids = lex.word_phonemes(word)?;
        Some(ids.iter().map(|&p| lex.symbol(p).to_string()).collect())
    }

    /// Features describing one token in isolation.
    fn local(&self, token: &str, word: &str, out: &mut Named, prefix: &str) {
        let marked: Vec<char> = format!("^{token}$").chars().collect();
        for n in 1..=3 {
            for gram in marked.windows(n) {
                let g: String = gram.iter().collect();
                out.push((format!("{prefix}c{n}:{g}"), 1.0));
            }
        }
        out.push((format!("{prefix}len"), (token.chars().count().min(20) as f64) / 10.0));

        let count = self.stats.word_counts.get(word).copied().unwrap_or(0);
        out.push((format!("{prefix}logf"), log_scale(count, self.stats.max_word_count)));
        out.push((format!("{prefix}fb:{}", freq_bucket(count)), 1.0));

        match self.pronunciation(word) {
            Some(phones) => {
                let rarest = phones
                    .iter()
                    .map(|p| self.stats.phoneme_counts.get(p).copied().unwrap_or(0))
                    .min()
                    .unwrap_or(0);
                out.push((format!("{prefix}rph"), log_scale(rarest, self.stats.max_phoneme_count)));
                out.push((format!("{prefix}rpb:{}", freq_bucket(rarest)), 1.0));
                for p in phones {
                    out.push((format!("{prefix}ph:{p}"), 1.0));
                }
            }
            None => out.push((format!("{prefix}oov"), 1.0)),
        }
    }

    fn position_bucket(word_index: usize, words: usize) -> &'static str {
        if words <= 1 {
            return "single";
        }
        if word_index == 0 {
            return "first";
        }
        if word_index + 1 == words {
            return "last";
        }
        match (word_index * 3) / words {
            0 => "early",
            1 => "middle",
            _ => "late",
        }
    }

    fn named_token_features(&self, seq: &TokenSequence, pos: usize) -> Named {
        let mut named = Vec::with_capacity(96);
        let word_of = |i: usize| seq.word_of_token[i].map(|w| seq.words[w].as_str());
        let wi = seq.word_of_token[pos].expect("content token");
        self.local(&seq.tokens[pos], &seq.words[wi], &mut named, "");
        named.push((format!("pos:{}", Self::position_bucket(wi, seq.word_count())), 1.0));
        for (prefix, neighbor) in [("L|", pos.checked_sub(1)), ("R|", Some(pos + 1))] {
            match neighbor.and_then(|i| word_of(i).map(|w| (i, w))) {
                Some((i, w)) => self.local(&seq.tokens[i], w, &mut named, prefix),
                None => named.push((format!("{prefix}none"), 1.0)),
            }
        }
        named
    }

    fn hash(named: Named) -> SparseVec {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (name, v) in named {
            *acc.entry(bucket(&name)).or_default() += v;
        }
        let norm = acc.values().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        acc.into_iter().map(|(b, v)| (b, v * scale)).collect()
    }

    /// Feature vector of each content (non-sentinel) token, in order.
    pub fn token_features(&self, seq: &TokenSequence) -> Vec<SparseVec> {
        seq.content_positions()
            .map(|pos| Self::hash(self.named_token_features(seq, pos)))
            .collect()
    }

    /// Mean-pooled token features plus sentence length features.
    pub fn sentence_features(&self, seq: &TokenSequence) -> SparseVec {
        let positions: Vec<usize> = seq.content_positions().collect();
        let mut named: Named = Vec::new();
        let n = positions.len().max(1) as f64;
        for &pos in &positions {
            for (name, v) in self.named_token_features(seq, pos) {
                named.push((name, v / n));
            }
        }
        let words = seq.word_count();
        named.push(("s:words".into(), (words.min(40) as f64) / 20.0));
        named.push((format!("s:wb:{}", freq_bucket(words as u64)), 1.0));
        Self::hash(named)
    }
}

/// Context features of one phoneme inside its word.
pub fn phoneme_context_features(left: &str, center: &str, right: &str) -> SparseVec {
    let named = [
        format!("pc={center}"),
        format!("pl={left}"),
        format!("pr={right}"),
        format!("plc={left}_{center}"),
        format!("pcr={center}_{right}"),
        format!("plcr={left}_{center}_{right}"),
    ];
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    for name in &named {
        *acc.entry(bucket(name)).or_default() += 1.0;
    }
    let norm = acc.values().map(|v| v * v).sum::<f64>().sqrt();
    acc.into_iter().map(|(b, v)| (b, v / norm)).collect()
}

/// Word -> count lookup used by other modules.
pub fn word_counts<'a>(texts: impl IntoIterator<Item = &'a str>) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for t in texts {
        for w in crate::alignment::normalize(t) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::tokenize::tokenize;

    #[test]
    fn features_are_unit_norm_and_deterministic() {
        let stats = CorpusStats::from_texts(["the cat sat", "the dog"], None);
        let f = TokenFeaturizer::new(stats);
        let seq = tokenize("the cat", None);
        let a = f.token_features(&seq);
        let b = f.token_features(&seq);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        for x in &a {
            let norm: f64 = x.iter().map(|(_, v)| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stats_count_words_and_phonemes() {
        let lex = Lexicon::parse("CAT K AE T\nTHE DH AH\n", Default::default()).unwrap();
        let s = CorpusStats::from_texts(["the cat", "the"], Some(&lex));
        assert_eq!(s.word_counts["the"], 2);
        assert_eq!(s.phoneme_counts["DH"], 2);
        assert_eq!(s.phoneme_counts["K"], 1);
        assert_eq!(s.max_word_count, 2);
    }

    #[test]
    fn position_buckets() {
        assert_eq!(TokenFeaturizer::position_bucket(0, 1), "single");
        assert_eq!(TokenFeaturizer::position_bucket(0, 5), "first");
        assert_eq!(TokenFeaturizer::position_bucket(4, 5), "last");
        assert_eq!(TokenFeaturizer::position_bucket(1, 9), "early");
        assert_eq!(TokenFeaturizer::position_bucket(4, 9), "middle");
        assert_eq!(TokenFeaturizer::position_bucket(7, 9), "late");
    }
}
