//! Test case data model, manifest ingestion, splitting and budgeting.
//!
//! A manifest is line-delimited JSON, one test case per line:
//!
//! ```text
//! {"id": "t1", "reference": "a cute dog", "duration_s": 1.4}
//! {"id": "t2", "reference": "the cat", "duration_s": 0.9, "hypothesis": "the hat"}
//! ```
//!
//! Unknown fields are kept and written back out unchanged.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::alignment::normalize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub reference: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<String>,
    /// Fields not understood by this crate, preserved on passthrough.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl TestCase {
    pub fn new(id: impl Into<String>, reference: impl Into<String>, duration_s: f64) -> Self {
        TestCase {
            id: id.into(),
            reference: reference.into(),
            duration_s,
            hypothesis: None,
            audio_path: None,
            extra: Map::new(),
        }
    }

    pub fn with_hypothesis(mut self, hypothesis: impl Into<String>) -> Self {
        self.hypothesis = Some(hypothesis.into());
        self
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("test case id must be non-empty"));
        }
        if !self.duration_s.is_finite() || self.duration_s < 0.0 {
            return Err(Error::invalid(format!(
                "test case `{}` has invalid duration {}",
                self.id, self.duration_s
            )));
        }
        if normalize(&self.reference).is_empty() {
            return Err(Error::invalid(format!(
                "test case `{}` has an empty reference",
                self.id
            )));
        }
        Ok(())
    }
}

/// An ordered speech test suite. Order is the manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    cases: Vec<TestCase>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, cases: Vec<TestCase>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(cases.len());
        for case in &cases {
            case.validate()?;
            if !seen.insert(case.id.as_str()) {
                return Err(Error::DuplicateId(case.id.clone()));
            }
        }
        Ok(Corpus {
            name: name.into(),
            cases,
        })
    }

    pub fn cases(&self) -> &[TestCase] {
        &self.cases
    }

    pub fn into_cases(self) -> Vec<TestCase> {
        self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TestCase> {
        self.cases.iter()
    }

    /// Subset by positions, kept in corpus order.
    fn subset(&self, name: &str, mut positions: Vec<usize>) -> Corpus {
        positions.sort_unstable();
        Corpus {
            name: format!("{}/{}", self.name, name),
            cases: positions.into_iter().map(|i| self.cases[i].clone()).collect(),
        }
    }
}

/// Ratios for the selection / validation / test partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub selection_ratio: f64,
    pub validation_ratio: f64,
    pub test_ratio: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(selection_ratio: f64, validation_ratio: f64, test_ratio: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            selection_ratio,
            validation_ratio,
            test_ratio,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The 8:1:1 split.
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            selection_ratio: 0.8,
            validation_ratio: 0.1,
            test_ratio: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ratios = [self.selection_ratio, self.validation_ratio, self.test_ratio];
        if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::invalid("split ratios must be positive"));
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut cases = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let case: TestCase = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        case.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(case.id.clone()) {
            return Err(Error::DuplicateId(case.id));
        }
        cases.push(case);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::new(name, cases)
}

/// Write cases as a manifest. When `ranking` is given, each record gains
/// `rank` (1-based) and `score` fields.
pub fn write_manifest<'a, W: Write>(
    out: W,
    cases: impl IntoIterator<Item = &'a TestCase>,
    ranking: Option<&[f64]>,
) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for (i, case) in cases.into_iter().enumerate() {
        let mut value = serde_json::to_value(case).map_err(std::io::Error::other)?;
        if let (Some(scores), Value::Object(map)) = (ranking, &mut value) {
            map.insert("rank".into(), Value::from(i + 1));
            map.insert("score".into(), Value::from(scores[i]));
        }
        serde_json::to_writer(&mut out, &value).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_manifest<'a>(
    path: impl AsRef<Path>,
    cases: impl IntoIterator<Item = &'a TestCase>,
    ranking: Option<&[f64]>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest(file, cases, ranking).map_err(|e| Error::io(path, e))
}

fn shuffled_positions(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(&mut rng);
    positions
}

/// Seeded shuffle then slice into (selection, validation, test). Validation
/// and test receive `floor(n * ratio)` cases; the remainder goes to selection.
/// Each part keeps the corpus order.
pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus, Corpus)> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("cannot split an empty corpus"));
    }
    let n = corpus.len();
    let part = |ratio: f64| ((n as f64) * ratio + 1e-9).floor() as usize;
    let n_val = part(spec.validation_ratio);
    let n_test = part(spec.test_ratio);
    let n_sel = n - n_val - n_test;

    let positions = shuffled_positions(n, spec.seed);
    let (sel, rest) = positions.split_at(n_sel);
    let (val, test) = rest.split_at(n_val);
    Ok((
        corpus.subset("selection", sel.to_vec()),
        corpus.subset("validation", val.to_vec()),
        corpus.subset("test", test.to_vec()),
    ))
}

/// Draw `round_half_up(fraction * n)` cases as the seed set.
pub fn sample_seed_set(selection: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "seed fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = selection.len();
    let m = ((n as f64) * fraction + 0.5 + 1e-9).floor() as usize;
    let positions = shuffled_positions(n, seed);
    let (seed_pos, rest) = positions.split_at(m.min(n));
    Ok((
        selection.subset("seed", seed_pos.to_vec()),
        selection.subset("remainder", rest.to_vec()),
    ))
}

pub fn total_duration<'a>(cases: impl IntoIterator<Item = &'a TestCase>) -> f64 {
    cases.into_iter().map(|c| c.duration_s).sum()
}
