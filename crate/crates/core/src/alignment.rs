//! Word and character alignment, error labels and WER/CER.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EDGE_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')'];

/// Lowercase, strip edge punctuation, split on whitespace. Apostrophes are kept.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(EDGE_PUNCT).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Normalized text with single spaces between words.
pub fn normalized_text(text: &str) -> String {
    normalize(text).join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EditKind {
    Correct,
    Substitute,
    Insert,
    Delete,
}

impl EditKind {
    pub fn symbol(self) -> char {
        match self {
            EditKind::Correct => 'C',
            EditKind::Substitute => 'S',
            EditKind::Insert => 'I',
            EditKind::Delete => 'D',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub ref_index: Option<usize>,
    pub hyp_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
    pub distance: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub correct: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

impl Alignment {
    pub fn counts(&self) -> EditCounts {
        let mut c = EditCounts::default();
        for op in &self.ops {
            match op.kind {
                EditKind::Correct => c.correct += 1,
                EditKind::Substitute => c.substitutions += 1,
                EditKind::Insert => c.insertions += 1,
                EditKind::Delete => c.deletions += 1,
            }
        }
        c
    }

    /// Compact `CSCID`-style rendering.
    pub fn op_string(&self) -> String {
        self.ops.iter().map(|op| op.kind.symbol()).collect()
    }
}

/// Unit-cost Levenshtein table, `(n + 1) x (m + 1)` row-major.
fn cost_table<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<usize> {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for (j, cell) in dp[..w].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        dp[i * w] = i;
        for j in 1..=m {
            let sub = dp[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = dp[(i - 1) * w + j] + 1;
            let ins = dp[i * w + j - 1] + 1;
            dp[i * w + j] = sub.min(del).min(ins);
        }
    }
    dp
}

/// Edit distance without backtrace (two rows).
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let m = hypothesis.len();
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(r != h)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Minimum-cost alignment. Backtrace ties prefer the diagonal (C/S), then
/// Delete, then Insert.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Alignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let dp = cost_table(reference, hypothesis);
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if dp[(i - 1) * w + j - 1] + usize::from(!same) == here {
                ops.push(EditOp {
                    kind: if same { EditKind::Correct } else { EditKind::Substitute },
                    ref_index: Some(i - 1),
                    hyp_index: Some(j - 1),
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * w + j] + 1 == here {
            ops.push(EditOp {
                kind: EditKind::Delete,
                ref_index: Some(i - 1),
                hyp_index: None,
            });
            i -= 1;
        } else {
            ops.push(EditOp {
                kind: EditKind::Insert,
                ref_index: None,
                hyp_index: Some(j - 1),
            });
            j -= 1;
        }
    }
    ops.reverse();
    Alignment {
        ops,
        distance: dp[n * w + m],
    }
}

/// Per-reference-word error labels (1 = wrongly transcribed).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WordLabels {
    pub labels: Vec<u8>,
}

impl WordLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn errors(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// A reference word is an error iff it takes part in a Substitute or Delete.
/// Insertions are not attributed to any word.
pub fn derive_word_labels(alignment: &Alignment, ref_len: usize) -> Result<WordLabels> {
    let covered = alignment.ops.iter().filter(|op| op.ref_index.is_some()).count();
    if covered != ref_len {
        return Err(Error::LengthMismatch {
            what: "alignment reference positions".into(),
            expected: ref_len,
            actual: covered,
        });
    }
    let mut labels = vec![0u8; ref_len];
    for op in &alignment.ops {
        if let (EditKind::Substitute | EditKind::Delete, Some(i)) = (op.kind, op.ref_index) {
            if i >= ref_len {
                return Err(Error::invalid(format!("reference index {i} out of range {ref_len}")));
            }
            labels[i] = 1;
        }
    }
    Ok(WordLabels { labels })
}

/// Normalize both texts, align them and return the word labels.
pub fn word_labels_for(reference: &str, hypothesis: &str) -> WordLabels {
    let r = normalize(reference);
    let h = normalize(hypothesis);
    let a = align(&r, &h);
    derive_word_labels(&a, r.len()).expect("alignment covers every reference word")
}

/// Pooled word error rate: total S+I+D over total reference words.
pub fn wer<S: AsRef<str> + PartialEq>(pairs: &[(Vec<S>, Vec<S>)]) -> Result<f64> {
    let mut edits = 0usize;
    let mut words = 0usize;
    for (r, h) in pairs {
        edits += edit_distance(r, h);
        words += r.len();
    }
    if words == 0 {
        return Err(Error::Empty("WER needs at least one reference word"));
    }
    Ok(edits as f64 / words as f64)
}

/// Pooled character error rate over normalized text (single spaces between words).
pub fn cer<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<f64> {
    let mut edits = 0usize;
    let mut chars = 0usize;
    for (r, h) in pairs {
        let r: Vec<char> = normalized_text(r.as_ref()).chars().collect();
        let h: Vec<char> = normalized_text(h.as_ref()).chars().collect();
        edits += edit_distance(&r, &h);
        chars += r.len();
    }
    if chars == 0 {
        return Err(Error::Empty("CER needs at least one reference character"));
    }
    Ok(edits as f64 / chars as f64)
}

/// WER over raw text pairs, normalizing each side.
pub fn wer_text<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<f64> {
    let tokenized: Vec<(Vec<String>, Vec<String>)> = pairs
        .iter()
        .map(|(r, h)| (normalize(r.as_ref()), normalize(h.as_ref())))
        .collect();
    wer(&tokenized)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("I have a DOG."), ["i", "have", "a", "dog"]);
        assert_eq!(normalize("it's  fine "), ["it's", "fine"]);
        assert!(normalize("").is_empty());
        assert_eq!(normalize("(hello), \"world\" ! ?"), ["hello", "world"]);
    }

    #[test]
    fn alignment_examples() {
        let a = align(&toks("a b"), &toks("a b"));
        assert_eq!((a.op_string().as_str(), a.distance), ("CC", 0));
        let a = align(&toks("a b c"), &toks("a x c"));
        assert_eq!((a.op_string().as_str(), a.distance), ("CSC", 1));
        let a = align(&toks("a b"), &toks("a"));
        assert_eq!((a.op_string().as_str(), a.distance), ("CD", 1));
        let a = align(&toks("a"), &toks("a b"));
        assert_eq!((a.op_string().as_str(), a.distance), ("CI", 1));
        let a = align::<&str>(&[], &[]);
        assert!(a.ops.is_empty());
    }

    #[test]
    fn tie_break_prefers_substitution_then_delete() {
        // "a b" -> "c": S+D or D+S both cost 2; the backtrace runs from the end
        // and prefers the diagonal there.
        let a = align(&toks("a b"), &toks("c"));
        assert_eq!(a.op_string(), "DS");
        assert_eq!(a.distance, 2);
    }

    #[test]
    fn labels() {
        let a = align(&toks("a b c"), &toks("a x c"));
        assert_eq!(derive_word_labels(&a, 3).unwrap().labels, [0, 1, 0]);
        let a = align(&toks("a b"), &toks("a"));
        assert_eq!(derive_word_labels(&a, 2).unwrap().labels, [0, 1]);
        let a = align(&toks("a"), &toks("a b"));
        assert_eq!(derive_word_labels(&a, 1).unwrap().labels, [0]);
        assert!(derive_word_labels(&a, 2).is_err());
    }

    #[test]
    fn wer_examples() {
        let same = vec![(toks("a b c"), toks("a b c"))];
        assert_eq!(wer(&same).unwrap(), 0.0);
        let one_sub = vec![(toks("a b c"), toks("a x c"))];
        assert!((wer(&one_sub).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let inserts = vec![(toks("a"), toks("a b c"))];
        assert_eq!(wer(&inserts).unwrap(), 2.0);
        let empty: Vec<(Vec<&str>, Vec<&str>)> = vec![(vec![], vec!["x"])];
        assert!(wer(&empty).is_err());
    }

    #[test]
    fn wer_pools_rather_than_averages() {
        // 1 error in 1 word and 0 errors in 9 words: pooled 0.1, mean-of-rates 0.5
        let pairs = vec![
            (toks("a"), toks("b")),
            (toks("a b c d e f g h i"), toks("a b c d e f g h i")),
        ];
        let pooled = wer(&pairs).unwrap();
        assert!((pooled - 0.1).abs() < 1e-12);
        let mean = (wer(&pairs[..1]).unwrap() + wer(&pairs[1..]).unwrap()) / 2.0;
        assert!((mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cer_examples() {
        assert_eq!(cer(&[("hello there", "hello there")]).unwrap(), 0.0);
        assert!((cer(&[("abc", "axc")]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(cer(&[("ab", "")]).unwrap(), 1.0);
        // word boundary errors register through the space
        assert!((cer(&[("ab cd", "abcd")]).unwrap() - 1.0 / 5.0).abs() < 1e-12);
        assert!(cer(&[("", "x")]).is_err());
    }
}
