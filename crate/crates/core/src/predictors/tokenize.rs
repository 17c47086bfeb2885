//! Subword tokenization and label propagation.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::{normalize, WordLabels};
use crate::error::{Error, Result};

pub const START_TOKEN: &str = "<s>";
pub const END_TOKEN: &str = "</s>";
/// Label carried by sentinel tokens; excluded from the loss.
pub const IGNORE_LABEL: i32 = -100;

/// Set of subword pieces for greedy longest-match segmentation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordVocab {
    pieces: BTreeSet<String>,
    #[serde(skip)]
    max_chars: usize,
}

impl SubwordVocab {
    pub fn new<I, S>(pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let pieces: BTreeSet<String> = pieces
            .into_iter()
            .map(|p| p.as_ref().trim().trim_start_matches("##").to_lowercase())
            .filter(|p| !p.is_empty())
            .collect();
        let max_chars = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(0);
        SubwordVocab { pieces, max_chars }
    }

    /// One piece per line; a leading `##` continuation marker is dropped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(text.lines()))
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    fn max_chars(&self) -> usize {
        if self.max_chars == 0 {
            self.pieces.iter().map(|p| p.chars().count()).max().unwrap_or(0)
        } else {
            self.max_chars
        }
    }

    /// Greedy longest-match segmentation; an unsegmentable remainder becomes one piece.
    pub fn segment(&self, word: &str) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        let max = self.max_chars();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let longest = (1..=max.min(chars.len() - start))
                .rev()
                .map(|len| chars[start..start + len].iter().collect::<String>())
                .find(|cand| self.pieces.contains(cand));
            match longest {
                Some(piece) => {
                    start += piece.chars().count();
                    pieces.push(piece);
                }
                None => {
                    pieces.push(chars[start..].iter().collect());
                    break;
                }
            }
        }
        pieces
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    /// Source word of each token; `None` for sentinels.
    pub word_of_token: Vec<Option<usize>>,
    pub special_mask: Vec<bool>,
    /// The normalized words the tokens were cut from.
    pub words: Vec<String>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Positions of non-sentinel tokens.
    pub fn content_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.tokens.len()).filter(|&i| !self.special_mask[i])
    }

    pub fn content_tokens(&self) -> Vec<&str> {
        self.content_positions().map(|i| self.tokens[i].as_str()).collect()
    }
}

pub fn tokenize(text: &str, vocab: Option<&SubwordVocab>) -> TokenSequence {
    tokenize_words(normalize(text), vocab)
}

pub fn tokenize_words(words: Vec<String>, vocab: Option<&SubwordVocab>) -> TokenSequence {
    let mut tokens = vec![START_TOKEN.to_string()];
    let mut word_of_token = vec![None];
    for (wi, word) in words.iter().enumerate() {
        let pieces = match vocab {
            Some(v) if !v.is_empty() => v.segment(word),
            _ => vec![word.clone()],
        };
        word_of_token.extend(std::iter::repeat_n(Some(wi), pieces.len()));
        tokens.extend(pieces);
    }
    tokens.push(END_TOKEN.to_string());
    word_of_token.push(None);
    let special_mask = word_of_token.iter().map(Option::is_none).collect();
    TokenSequence {
        tokens,
        word_of_token,
        special_mask,
        words,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub seq: TokenSequence,
    pub labels: Vec<i32>,
}

impl LabeledSequence {
    /// `(position, label)` for tokens that count towards the loss.
    pub fn supervised(&self) -> impl Iterator<Item = (usize, i32)> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != IGNORE_LABEL)
            .map(|(i, &l)| (i, l))
    }
}

/// Every subword inherits its word's label; sentinels get [`IGNORE_LABEL`].
pub fn propagate_labels(word_labels: &WordLabels, seq: &TokenSequence) -> Result<LabeledSequence> {
    let distinct = seq.word_of_token.iter().flatten().collect::<BTreeSet<_>>().len();
    if word_labels.len() != distinct {
        return Err(Error::LengthMismatch {
            what: "word labels vs tokenized words".into(),
            expected: distinct,
            actual: word_labels.len(),
        });
    }
    let labels = seq
        .word_of_token
        .iter()
        .map(|w| match w {
            Some(wi) => i32::from(word_labels.labels[*wi]),
            None => IGNORE_LABEL,
        })
        .collect();
    Ok(LabeledSequence {
        seq: seq.clone(),
        labels,
    })
}
