//! Pronunciation lexicon, triphones and phoneme histograms.
//!
//! The lexicon file uses the common pronouncing-dictionary layout:
//!
//! ```text
//! ;;; comment
//! SPEECH  S P IY1 CH
//! READ  R IY1 D
//! READ(1)  R EH1 D
//! ```
//!
//! Stress digits are stripped, alternate pronunciations (`WORD(1)`) are
//! ignored in favor of the first one seen, and phoneme symbols are otherwise
//! treated as opaque tokens.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::normalize;
use crate::corpus::TestCase;
use crate::error::{Error, Result};

pub type PhonemeId = u16;

/// Word boundary marker used in triphones.
pub const BOUNDARY: &str = "#";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    /// Out-of-vocabulary words contribute no phonemes.
    #[default]
    Skip,
    /// Each ASCII letter or digit of an unknown word becomes a pseudo-phoneme `<c>`.
    Letters,
}

impl std::str::FromStr for OovPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(OovPolicy::Skip),
            "letters" => Ok(OovPolicy::Letters),
            other => Err(Error::invalid(format!("unknown OOV policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: HashMap<String, Vec<PhonemeId>>,
    inventory: Vec<String>,
    index: HashMap<String, PhonemeId>,
    oov_policy: OovPolicy,
}

/// Phonemes of a text with the word each one came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Phonemized {
    pub phonemes: Vec<PhonemeId>,
    pub word_of_phoneme: Vec<usize>,
    /// Words (normalized) that had no pronunciation and were skipped.
    pub oov_words: Vec<String>,
}

fn letter_symbol(c: char) -> String {
    format!("<{c}>")
}

fn strip_stress(sym: &str) -> &str {
    sym.trim_end_matches(|c: char| c.is_ascii_digit())
}

impl Lexicon {
    pub fn load(path: impl AsRef<Path>, oov_policy: OovPolicy) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, oov_policy).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            Error::Empty(what) => Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: what.to_string(),
            },
            other => other,
        })
    }

    pub fn parse(text: &str, oov_policy: OovPolicy) -> Result<Self> {
        let mut raw: Vec<(String, Vec<String>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(";;;") {
                continue;
            }
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap_or_default();
            let phones: Vec<String> = parts.map(|p| strip_stress(p).to_string()).collect();
            if phones.is_empty() || phones.iter().any(|p| p.is_empty() || p == BOUNDARY) {
                return Err(Error::Parse {
                    path: Default::default(),
                    line: lineno + 1,
                    message: format!("bad pronunciation line `{line}`"),
                });
            }
            let word = match head.find('(') {
                Some(i) if head.ends_with(')') && i > 0 => &head[..i],
                _ => head,
            }
            .to_lowercase();
            // later pronunciations are kept so their phonemes reach the inventory;
            // from_entries keeps only the first one per word
            raw.push((word, phones));
        }
        if raw.is_empty() {
            return Err(Error::Empty("lexicon has no entries"));
        }
        Self::from_entries(raw, oov_policy)
    }

    pub fn from_entries<W, P, I>(entries: I, oov_policy: OovPolicy) -> Result<Self>
    where
        W: AsRef<str>,
        P: AsRef<str>,
        I: IntoIterator<Item = (W, Vec<P>)>,
    {
        let entries: Vec<(String, Vec<String>)> = entries
            .into_iter()
            .map(|(w, ps)| {
                (
                    w.as_ref().to_lowercase(),
                    ps.iter().map(|p| strip_stress(p.as_ref()).to_string()).collect(),
                )
            })
            .collect();
        let mut symbols: BTreeSet<String> = entries.iter().flat_map(|(_, ps)| ps.iter().cloned()).collect();
        if oov_policy == OovPolicy::Letters {
            symbols.extend(('a'..='z').chain('0'..='9').map(letter_symbol));
        }
        symbols.remove(BOUNDARY);
        if symbols.len() > PhonemeId::MAX as usize {
            return Err(Error::invalid("phoneme inventory too large"));
        }
        let inventory: Vec<String> = symbols.into_iter().collect();
        let index: HashMap<String, PhonemeId> = inventory
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as PhonemeId))
            .collect();
        let mut map = HashMap::with_capacity(entries.len());
        for (word, phones) in entries {
            if phones.is_empty() {
                continue;
            }
            let ids = phones.iter().map(|p| index[p.as_str()]).collect();
            map.entry(word).or_insert(ids);
        }
        if map.is_empty() {
            return Err(Error::Empty("lexicon has no entries"));
        }
        Ok(Lexicon {
            entries: map,
            inventory,
            index,
            oov_policy,
        })
    }

    pub fn inventory(&self) -> &[String] {
        &self.inventory
    }

    pub fn inventory_size(&self) -> usize {
        self.inventory.len()
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov_policy
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn symbol(&self, id: PhonemeId) -> &str {
        &self.inventory[id as usize]
    }

    pub fn id(&self, symbol: &str) -> Option<PhonemeId> {
        self.index.get(symbol).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Phonemes of one normalized word, or `None` when it is OOV under the
    /// skip policy (or has no letters to fall back on).
    pub fn word_phonemes(&self, word: &str) -> Option<Cow<'_, [PhonemeId]>> {
        if let Some(ids) = self.entries.get(word) {
            return Some(Cow::Borrowed(ids));
        }
        match self.oov_policy {
            OovPolicy::Skip => None,
            OovPolicy::Letters => {
                let ids: Vec<PhonemeId> = word
                    .chars()
                    .filter_map(|c| self.index.get(&letter_symbol(c.to_ascii_lowercase())).copied())
                    .collect();
                (!ids.is_empty()).then_some(Cow::Owned(ids))
            }
        }
    }

    pub fn phonemize(&self, text: &str) -> Phonemized {
        self.phonemize_words(&normalize(text))
    }

    pub fn phonemize_words<S: AsRef<str>>(&self, words: &[S]) -> Phonemized {
        let mut out = Phonemized::default();
        for (wi, word) in words.iter().enumerate() {
            match self.word_phonemes(word.as_ref()) {
                Some(ids) => {
                    out.phonemes.extend_from_slice(&ids);
                    out.word_of_phoneme.extend(std::iter::repeat_n(wi, ids.len()));
                }
                None => out.oov_words.push(word.as_ref().to_string()),
            }
        }
        out
    }

    /// Phoneme symbols of a text, concatenated over its words.
    pub fn to_phonemes(&self, text: &str) -> Vec<String> {
        self.phonemize(text)
            .phonemes
            .iter()
            .map(|&id| self.symbol(id).to_string())
            .collect()
    }

    /// Context-dependent phonemes of one word, padded with `#`.
    pub fn to_triphones(&self, word: &str) -> Result<Vec<Triphone>> {
        let key = normalize(word).join(" ");
        let ids = self
            .word_phonemes(&key)
            .ok_or_else(|| Error::invalid(format!("`{word}` has no pronunciation")))?;
        Ok(self.triphones_of(&ids))
    }

    fn triphones_of(&self, ids: &[PhonemeId]) -> Vec<Triphone> {
        let sym = |i: Option<&PhonemeId>| i.map_or_else(|| BOUNDARY.to_string(), |&p| self.symbol(p).to_string());
        (0..ids.len())
            .map(|k| Triphone {
                left: sym(k.checked_sub(1).and_then(|j| ids.get(j))),
                center: self.symbol(ids[k]).to_string(),
                right: sym(ids.get(k + 1)),
            })
            .collect()
    }

    /// Triphones of every in-lexicon word of a text.
    pub fn text_triphones(&self, text: &str) -> Vec<Triphone> {
        normalize(text)
            .iter()
            .filter_map(|w| self.word_phonemes(w))
            .flat_map(|ids| self.triphones_of(&ids))
            .collect()
    }

    /// Sparse `(phoneme, count)` pairs of a text, sorted by phoneme id.
    pub fn phoneme_counts(&self, text: &str) -> Vec<(PhonemeId, u32)> {
        let mut counts: BTreeMap<PhonemeId, u32> = BTreeMap::new();
        for id in self.phonemize(text).phonemes {
            *counts.entry(id).or_default() += 1;
        }
        counts.into_iter().collect()
    }

    /// Count phonemes or triphones over the references of `cases`.
    pub fn histogram<'a>(&self, cases: impl IntoIterator<Item = &'a TestCase>, unit: Unit) -> Histogram {
        let mut h = Histogram::empty(self, unit);
        for case in cases {
            match unit {
                Unit::Phoneme => {
                    for id in self.phonemize(&case.reference).phonemes {
                        h.add(self.symbol(id), 1);
                    }
                }
                Unit::Triphone => {
                    for t in self.text_triphones(&case.reference) {
                        h.add(&t.to_string(), 1);
                    }
                }
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triphone {
    pub left: String,
    pub center: String,
    pub right: String,
}

impl Triphone {
    pub fn new(left: &str, center: &str, right: &str) -> Self {
        Triphone {
            left: left.into(),
            center: center.into(),
            right: right.into(),
        }
    }
}

impl fmt::Display for Triphone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.left, self.center, self.right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Phoneme,
    Triphone,
}

/// Counts over a fixed support: the phoneme inventory, or every triphone
/// that can be formed from it. Zero-count units are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub unit: Unit,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
    /// Number of distinct units in the support.
    pub support: usize,
}

impl Histogram {
    pub fn empty(lex: &Lexicon, unit: Unit) -> Self {
        let m = lex.inventory_size();
        let support = match unit {
            Unit::Phoneme => m,
            // any center, left/right may also be the boundary
            Unit::Triphone => m * (m + 1) * (m + 1),
        };
        Histogram {
            unit,
            counts: BTreeMap::new(),
            total: 0,
            support,
        }
    }

    pub fn from_counts(unit: Unit, counts: BTreeMap<String, u64>, support: usize) -> Self {
        let total = counts.values().sum();
        Histogram {
            unit,
            counts,
            total,
            support,
        }
    }

    pub fn add(&mut self, key: &str, n: u64) {
        *self.counts.entry(key.to_string()).or_default() += n;
        self.total += n;
    }

    pub fn count(&self, key: &str) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (k, &v) in &other.counts {
            self.add(k, v);
        }
    }
}

/// Euclidean distance between the normalized histogram and the uniform
/// distribution over the whole support.
pub fn distance_to_uniform(h: &Histogram) -> Result<f64> {
    if h.total == 0 {
        return Err(Error::Empty("histogram has no counts"));
    }
    if h.support == 0 || h.counts.len() > h.support {
        return Err(Error::invalid("histogram support is smaller than its observed units"));
    }
    let m = h.support as f64;
    let u = 1.0 / m;
    let total = h.total as f64;
    let nonzero = h.counts.values().filter(|&&c| c > 0).count();
    let observed: f64 = h
        .counts
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| (c as f64 / total - u).powi(2))
        .sum();
    let unseen = (h.support - nonzero) as f64 * u * u;
    Ok((observed + unseen).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DICT: &str = ";;; test dictionary\nSPEECH  S P IY1 CH\nREAD  R IY1 D\nREAD(1)  R EH1 D\nA  AH0\nAB  AH B\n";

    fn lex() -> Lexicon {
        Lexicon::parse(DICT, OovPolicy::Skip).unwrap()
    }

    #[test]
    fn parses_entries() {
        let l = lex();
        assert_eq!(l.to_phonemes("speech"), ["S", "P", "IY", "CH"]);
        assert_eq!(l.to_phonemes("Read."), ["R", "IY", "D"]);
        assert_eq!(l.inventory(), ["AH", "B", "CH", "D", "EH", "IY", "P", "R", "S"]);
        assert!(l.to_phonemes("").is_empty());
    }

    #[test]
    fn duplicate_words_keep_first() {
        let l = Lexicon::parse("CAT K AE T\nCAT K AA T\n", OovPolicy::Skip).unwrap();
        assert_eq!(l.to_phonemes("cat"), ["K", "AE", "T"]);
        // the ignored pronunciation still contributes to the inventory
        assert!(l.id("AA").is_some());
    }

    #[test]
    fn empty_lexicon_is_error() {
        assert!(Lexicon::parse("", OovPolicy::Skip).is_err());
        assert!(Lexicon::parse(";;; only comments\n", OovPolicy::Skip).is_err());
    }

    #[test]
    fn oov_skip_and_letters() {
        let l = lex();
        let p = l.phonemize("speech zzz");
        assert_eq!(p.phonemes.len(), 4);
        assert_eq!(p.oov_words, ["zzz"]);
        let l = Lexicon::parse(DICT, OovPolicy::Letters).unwrap();
        let p = l.phonemize("speech zz");
        assert_eq!(p.phonemes.len(), 6);
        assert!(p.oov_words.is_empty());
        assert_eq!(l.to_phonemes("zz"), ["<z>", "<z>"]);
    }

    #[test]
    fn triphones_of_speech() {
        let t: Vec<String> = lex()
            .to_triphones("speech")
            .unwrap()
            .iter()
            .map(|t| t.to_string())
            .collect();
        assert_eq!(t, ["#-S-P", "S-P-IY", "P-IY-CH", "IY-CH-#"]);
        let t = lex().to_triphones("a").unwrap();
        assert_eq!(t, [Triphone::new("#", "AH", "#")]);
        let t = lex().to_triphones("ab").unwrap();
        assert_eq!(t, [Triphone::new("#", "AH", "B"), Triphone::new("AH", "B", "#")]);
        assert!(lex().to_triphones("zzz").is_err());
    }

    #[test]
    fn histograms() {
        let l = lex();
        let one = [TestCase::new("1", "speech", 1.0)];
        let h = l.histogram(&one, Unit::Phoneme);
        assert_eq!(h.total, 4);
        for p in ["S", "P", "IY", "CH"] {
            assert_eq!(h.count(p), 1);
        }
        let two = [TestCase::new("1", "speech", 1.0), TestCase::new("2", "speech", 1.0)];
        let h2 = l.histogram(&two, Unit::Phoneme);
        assert_eq!(h2.count("S"), 2);
        assert_eq!(h2.total, 8);
        assert_eq!(l.histogram(&[], Unit::Phoneme).total, 0);
        let t = l.histogram(&one, Unit::Triphone);
        assert_eq!(t.total, 4);
        assert_eq!(t.count("#-S-P"), 1);
        assert_eq!(t.support, 9 * 10 * 10);
    }

    #[test]
    fn distance_examples() {
        let mk = |counts: &[(&str, u64)], support| {
            Histogram::from_counts(
                Unit::Phoneme,
                counts.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                support,
            )
        };
        assert_eq!(
            distance_to_uniform(&mk(&[("A", 3), ("B", 3), ("C", 3)], 3)).unwrap(),
            0.0
        );
        let d = distance_to_uniform(&mk(&[("A", 4)], 2)).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-12);
        let d = distance_to_uniform(&mk(&[("A", 1), ("B", 1), ("C", 1), ("D", 1)], 4)).unwrap();
        assert!(d.abs() < 1e-12);
        assert!(distance_to_uniform(&mk(&[], 4)).is_err());
    }
}
