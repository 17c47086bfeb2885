//! Prioritization of speech test cases for ASR systems.
//!
//! The crate ranks reference texts by how many transcription errors they are
//! expected to uncover. Six strategies are provided (random, phoneme-rich,
//! PEP, PEP-D, sentence-failure and word-level error density), together with
//! the scoring (WER/CER), phoneme analysis and statistics used to compare them.

pub mod alignment;
pub mod corpus;
pub mod error;
pub mod evalstats;
pub mod hashing;
pub mod lexicon;
pub mod predictors;
pub mod prioritizers;
pub mod simoracle;
pub mod synth;

pub use alignment::{
    align, cer, derive_word_labels, normalize, wer, wer_text, Alignment, EditKind, EditOp, WordLabels,
};
pub use corpus::{Corpus, SplitSpec, TestCase};
pub use error::{Error, Result};
pub use lexicon::{Histogram, Lexicon, OovPolicy, Triphone, Unit};
pub use prioritizers::{BudgetSelection, RankedSuite, Strategy};
