//! Python bindings for the `voxrank` test prioritization library.
//!
//! The module is deliberately thin: each class wraps one core type and every
//! function forwards to the matching core routine.

use std::error::Error as _;
use std::sync::Arc;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use voxrank::alignment::{align as align_tokens, normalize as normalize_text};
use voxrank::corpus::{load_manifest as load_corpus, save_manifest as save_corpus};
use voxrank::evalstats::{self, Alternative};
use voxrank::predictors::features::{CorpusStats, TokenFeaturizer};
use voxrank::predictors::{
    labeled_sequences, phoneme_examples, sentence_outcomes, train_phoneme_predictor, train_sentence_predictor,
    train_word_predictor, ModelFile, TrainConfig,
};
use voxrank::prioritizers::{self, DesiredDistribution, RankedCase, RankedSuite};
use voxrank::simoracle::{RuleFile, SimulatedAsr};
use voxrank::{Strategy, TestCase};

fn to_py(e: voxrank::Error) -> PyErr {
    match &e {
        voxrank::Error::Io { source, .. } => PyOSError::new_err(format!("{e}: {source}")),
        _ => match e.source() {
            Some(inner) => PyValueError::new_err(format!("{e}: {inner}")),
            None => PyValueError::new_err(e.to_string()),
        },
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for voxrank::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn parse<T: std::str::FromStr<Err = voxrank::Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

/// One utterance: an id, its reference text, its duration and optionally an
/// ASR hypothesis.
#[pyclass(name = "TestCase", module = "pyvoxrank", skip_from_py_object)]
#[derive(Clone)]
struct PyTestCase {
    inner: TestCase,
}

#[pymethods]
impl PyTestCase {
    #[new]
    #[pyo3(signature = (id, reference, duration_s, hypothesis=None))]
    fn new(id: String, reference: String, duration_s: f64, hypothesis: Option<String>) -> Self {
        let mut inner = TestCase::new(id, reference, duration_s);
        inner.hypothesis = hypothesis;
        PyTestCase { inner }
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn reference(&self) -> &str {
        &self.inner.reference
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s
    }

    #[getter]
    fn hypothesis(&self) -> Option<&str> {
        self.inner.hypothesis.as_deref()
    }

    #[setter]
    fn set_hypothesis(&mut self, hypothesis: Option<String>) {
        self.inner.hypothesis = hypothesis;
    }

    fn __repr__(&self) -> String {
        format!(
            "TestCase(id={:?}, reference={:?}, duration_s={}, hypothesis={:?})",
            self.inner.id, self.inner.reference, self.inner.duration_s, self.inner.hypothesis
        )
    }
}

fn unwrap_cases(cases: &[PyRef<'_, PyTestCase>]) -> Vec<TestCase> {
    cases.iter().map(|c| c.inner.clone()).collect()
}

fn wrap_cases(cases: Vec<TestCase>) -> Vec<PyTestCase> {
    cases.into_iter().map(|inner| PyTestCase { inner }).collect()
}

/// Pronunciation dictionary in CMUdict format.
#[pyclass(name = "Lexicon", module = "pyvoxrank", frozen)]
struct PyLexicon {
    inner: Arc<voxrank::Lexicon>,
}

#[pymethods]
impl PyLexicon {
    #[staticmethod]
    #[pyo3(signature = (path, oov="skip"))]
    fn load(path: std::path::PathBuf, oov: &str) -> PyResult<Self> {
        let inner = voxrank::Lexicon::load(path, parse(oov)?).py()?;
        Ok(PyLexicon { inner: Arc::new(inner) })
    }

    #[staticmethod]
    #[pyo3(signature = (text, oov="skip"))]
    fn parse(text: &str, oov: &str) -> PyResult<Self> {
        let inner = voxrank::Lexicon::parse(text, parse(oov)?).py()?;
        Ok(PyLexicon { inner: Arc::new(inner) })
    }

    #[getter]
    fn inventory(&self) -> Vec<String> {
        self.inner.inventory().to_vec()
    }

    /// Phoneme symbols of a text, skipping (or spelling) unknown words as the
    /// OOV policy dictates.
    fn phonemes(&self, text: &str) -> Vec<String> {
        self.inner.to_phonemes(text)
    }

    /// Word-internal triphones as `left-center+right` strings.
    fn triphones(&self, text: &str) -> Vec<String> {
        self.inner.text_triphones(text).iter().map(|t| t.to_string()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, word: &str) -> bool {
        self.inner.contains(word)
    }
}

/// A trained error predictor: `word`, `sentence` or `phoneme`.
#[pyclass(name = "Model", module = "pyvoxrank")]
struct PyModel {
    inner: ModelFile,
}

#[pymethods]
impl PyModel {
    /// Train on transcribed cases. Word frequencies come from `stats_texts`
    /// when given, otherwise from the training references.
    #[staticmethod]
    #[pyo3(signature = (
        kind, cases, lexicon=None, stats_texts=None, seed=0, iterations=300,
        learning_rate=4.0, l2=1e-4, positive_weight=1.0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        kind: &str,
        cases: Vec<PyRef<'_, PyTestCase>>,
        lexicon: Option<&PyLexicon>,
        stats_texts: Option<Vec<String>>,
        seed: u64,
        iterations: usize,
        learning_rate: f64,
        l2: f64,
        positive_weight: f64,
    ) -> PyResult<Self> {
        let cases = unwrap_cases(&cases);
        let lex = lexicon.map(|l| Arc::clone(&l.inner));
        let cfg = TrainConfig {
            seed,
            iterations,
            learning_rate,
            l2,
            positive_weight,
        };
        let kind = kind.to_string();
        let inner = py
            .detach(move || -> voxrank::Result<ModelFile> {
                let featurizer = || {
                    let texts: Vec<&str> = match &stats_texts {
                        Some(t) => t.iter().map(String::as_str).collect(),
                        None => cases.iter().map(|c| c.reference.as_str()).collect(),
                    };
                    let mut f = TokenFeaturizer::new(CorpusStats::from_texts(texts, lex.as_deref()));
                    f.set_lexicon(lex.clone());
                    f
                };
                match kind.as_str() {
                    "word" => {
                        let seqs = labeled_sequences(&cases, None)?;
                        Ok(ModelFile::Word(train_word_predictor(&seqs, featurizer(), None, &cfg)?))
                    }
                    "sentence" => Ok(ModelFile::Sentence(train_sentence_predictor(
                        &sentence_outcomes(&cases)?,
                        featurizer(),
                        &cfg,
                    )?)),
                    "phoneme" => {
                        let lex = lex
                            .as_deref()
                            .ok_or_else(|| voxrank::Error::Invalid("a phoneme model needs a lexicon".into()))?;
                        Ok(ModelFile::Phoneme(train_phoneme_predictor(
                            &phoneme_examples(lex, &cases)?,
                            &cfg,
                        )?))
                    }
                    other => Err(voxrank::Error::Invalid(format!(
                        "unknown model kind `{other}` (expected word, sentence or phoneme)"
                    ))),
                }
            })
            .py()?;
        Ok(PyModel { inner })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: ModelFile::load(path).py()?,
        })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(path).py()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    /// Final and base-rate training loss.
    #[getter]
    fn training_loss(&self) -> (f64, f64) {
        let r = match &self.inner {
            ModelFile::Word(p) => &p.meta.report,
            ModelFile::Sentence(p) => &p.meta.report,
            ModelFile::Phoneme(p) => &p.meta.report,
        };
        (r.final_loss, r.base_rate_loss)
    }

    /// Per-token error probabilities (word models) or per-phoneme ones
    /// (phoneme models, which need the lexicon). A sentence model returns a
    /// single failure probability.
    #[pyo3(signature = (text, lexicon=None))]
    fn predict(&self, text: &str, lexicon: Option<&PyLexicon>) -> PyResult<Vec<f64>> {
        match &self.inner {
            ModelFile::Word(p) => Ok(p.predict_token_probs(text)),
            ModelFile::Sentence(p) => Ok(vec![p.predict_failure_prob(text)]),
            ModelFile::Phoneme(p) => {
                let lex = lexicon.ok_or_else(|| PyValueError::new_err("phoneme models need a lexicon"))?;
                Ok(p.predict_phoneme_probs(&lex.inner, text))
            }
        }
    }
}

/// Rule-driven stand-in for an ASR system.
#[pyclass(name = "Simulator", module = "pyvoxrank")]
struct PySimulator {
    inner: SimulatedAsr,
}

#[pymethods]
impl PySimulator {
    /// Build from a TOML rule file. The seed overrides the file's seed.
    #[new]
    #[pyo3(signature = (rules, seed=None, lexicon=None))]
    fn new(rules: std::path::PathBuf, seed: Option<u64>, lexicon: Option<&PyLexicon>) -> PyResult<Self> {
        let file = RuleFile::load(rules).py()?;
        let inner = SimulatedAsr::from_rule_file(file, seed, lexicon.map(|l| Arc::clone(&l.inner))).py()?;
        Ok(PySimulator { inner })
    }

    /// Word frequencies used by `word-frequency-below` rules.
    fn calibrate(&mut self, texts: Vec<String>) {
        self.inner.calibrate(texts.iter().map(String::as_str));
    }

    fn error_probability(&self, word: &str) -> f64 {
        self.inner.error_probability(word)
    }

    fn transcribe(&self, case: &PyTestCase) -> String {
        self.inner.transcribe(&case.inner)
    }

    /// Copies of the cases with hypotheses filled in.
    fn transcribe_all(&self, cases: Vec<PyRef<'_, PyTestCase>>) -> Vec<PyTestCase> {
        wrap_cases(self.inner.transcribe_cases(&unwrap_cases(&cases)))
    }

    fn expected_error_rate(&self, cases: Vec<PyRef<'_, PyTestCase>>) -> f64 {
        self.inner.expected_error_rate(&unwrap_cases(&cases), None)
    }
}

#[pyfunction]
fn normalize(text: &str) -> Vec<String> {
    normalize_text(text)
}

/// Word-level alignment of two texts: `(distance, ops)` where `ops` spells
/// the edit script with C, S, D and I.
#[pyfunction]
fn align(reference: &str, hypothesis: &str) -> (usize, String) {
    let a = align_tokens(&normalize_text(reference), &normalize_text(hypothesis));
    (a.distance, a.op_string())
}

/// Pooled word error rate of `(reference, hypothesis)` pairs.
#[pyfunction]
fn wer(pairs: Vec<(String, String)>) -> PyResult<f64> {
    voxrank::wer_text(&pairs).py()
}

#[pyfunction]
fn cer(pairs: Vec<(String, String)>) -> PyResult<f64> {
    voxrank::cer(&pairs).py()
}

#[pyfunction]
fn error_score(probs: Vec<f64>) -> PyResult<f64> {
    voxrank::predictors::error_score(&probs).py()
}

#[pyfunction]
fn load_manifest(path: std::path::PathBuf) -> PyResult<Vec<PyTestCase>> {
    Ok(wrap_cases(load_corpus(path).py()?.into_cases()))
}

#[pyfunction]
fn save_manifest(path: std::path::PathBuf, cases: Vec<PyRef<'_, PyTestCase>>) -> PyResult<()> {
    save_corpus(path, &unwrap_cases(&cases), None).py()
}

fn desired(lex: &voxrank::Lexicon, path: Option<std::path::PathBuf>) -> voxrank::Result<DesiredDistribution> {
    match path {
        Some(p) => DesiredDistribution::load(p, lex),
        None => Ok(DesiredDistribution::uniform(lex)),
    }
}

/// Rank cases with one of the six strategies. Returns `(case, score)` pairs,
/// best first.
#[pyfunction]
#[pyo3(signature = (strategy, cases, seed=0, lexicon=None, model=None, distribution=None))]
fn prioritize(
    py: Python<'_>,
    strategy: &str,
    cases: Vec<PyRef<'_, PyTestCase>>,
    seed: u64,
    lexicon: Option<&PyLexicon>,
    model: Option<&PyModel>,
    distribution: Option<std::path::PathBuf>,
) -> PyResult<Vec<(PyTestCase, f64)>> {
    let strategy: Strategy = parse(strategy)?;
    let cases = unwrap_cases(&cases);
    let lex = lexicon.map(|l| Arc::clone(&l.inner));
    let model = model.map(|m| m.inner.clone());
    let suite = py
        .detach(move || -> voxrank::Result<RankedSuite> {
            let need_lex = || {
                lex.clone()
                    .ok_or_else(|| voxrank::Error::Invalid(format!("strategy {strategy} needs a lexicon")))
            };
            Ok(match (strategy, model) {
                (Strategy::Random, _) => prioritizers::prioritize_random(&cases, seed),
                (Strategy::PhonemeRich, _) => {
                    let lex = need_lex()?;
                    prioritizers::prioritize_phoneme_rich(&cases, &lex, &desired(&lex, distribution)?)
                }
                (Strategy::Pep, Some(ModelFile::Phoneme(pep))) => {
                    prioritizers::prioritize_pep(&cases, &pep, &*need_lex()?)
                }
                (Strategy::PepD, Some(ModelFile::Phoneme(pep))) => {
                    let lex = need_lex()?;
                    prioritizers::prioritize_pep_d(&cases, &pep, &lex, &desired(&lex, distribution)?)
                }
                (Strategy::SentenceFailure, Some(ModelFile::Sentence(mut sp))) => {
                    sp.set_lexicon(lex);
                    prioritizers::prioritize_sentence(&cases, &sp)
                }
                (Strategy::Prophet, Some(ModelFile::Word(mut wp))) => {
                    wp.set_lexicon(lex);
                    prioritizers::prioritize_prophet(&cases, &wp)?
                }
                _ => {
                    return Err(voxrank::Error::Invalid(format!(
                        "strategy {strategy} needs a matching trained model"
                    )))
                }
            })
        })
        .py()?;
    Ok(suite
        .entries
        .into_iter()
        .map(|e| (PyTestCase { inner: e.case }, e.score))
        .collect())
}

/// Longest prefix of a ranking whose total duration fits `budget_s`.
#[pyfunction]
fn select_within_budget(ranked: Vec<(PyRef<'_, PyTestCase>, f64)>, budget_s: f64) -> PyResult<Vec<(PyTestCase, f64)>> {
    let suite = RankedSuite {
        entries: ranked
            .iter()
            .enumerate()
            .map(|(i, (c, score))| RankedCase {
                case: c.inner.clone(),
                score: *score,
                original_index: i,
            })
            .collect(),
        strategy: Strategy::Random,
        seed: 0,
    };
    let sel = prioritizers::select_within_budget(&suite, budget_s).py()?;
    Ok(sel
        .selected
        .into_iter()
        .zip(sel.scores)
        .map(|(inner, s)| (PyTestCase { inner }, s))
        .collect())
}

/// Duration of a seeded random sample of `k` cases.
#[pyfunction]
fn duration_matched_budget(cases: Vec<PyRef<'_, PyTestCase>>, k: usize, seed: u64) -> PyResult<f64> {
    prioritizers::duration_matched_budget(&unwrap_cases(&cases), k, seed).py()
}

/// Submodular phoneme utility of a set of cases under a uniform target.
#[pyfunction]
fn submodular_utility(cases: Vec<PyRef<'_, PyTestCase>>, lexicon: &PyLexicon) -> f64 {
    let pi = DesiredDistribution::uniform(&lexicon.inner);
    prioritizers::submodular_utility(&lexicon.inner, &unwrap_cases(&cases), &pi)
}

/// Paired Wilcoxon signed-rank test. Returns
/// `(statistic, p_value, n_effective, method)`.
#[pyfunction]
#[pyo3(signature = (a, b, alternative="two-sided"))]
fn wilcoxon(a: Vec<f64>, b: Vec<f64>, alternative: &str) -> PyResult<(f64, f64, usize, &'static str)> {
    let alt = match alternative {
        "two-sided" => Alternative::TwoSided,
        "greater" => Alternative::Greater,
        "less" => Alternative::Less,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown alternative `{other}` (expected two-sided, greater or less)"
            )))
        }
    };
    let o = evalstats::wilcoxon_signed_rank(&a, &b, alt).py()?;
    Ok((o.statistic, o.p_value, o.n_effective, o.method.name()))
}

/// Spearman rank correlation: `(rho, p_value)`.
#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    let (rho, o) = evalstats::spearman(&x, &y).py()?;
    Ok((rho, o.p_value))
}

#[pyfunction]
fn guilford_class(rho: f64) -> &'static str {
    evalstats::guilford_class(rho).name()
}

/// `(wer_a - wer_random) / wer_random`.
#[pyfunction]
fn improvement_over_random(wer_a: f64, wer_random: f64) -> PyResult<f64> {
    evalstats::rq1_relative_improvement(wer_a, wer_random).py()
}

/// `(wer_before - wer_after) / wer_before`.
#[pyfunction]
fn relative_reduction(wer_before: f64, wer_after: f64) -> PyResult<f64> {
    evalstats::rq2_relative_improvement(wer_before, wer_after).py()
}

#[pymodule]
pub fn pyvoxrank(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("STRATEGIES", Strategy::ALL.map(Strategy::name).to_vec())?;
    m.add_class::<PyTestCase>()?;
    m.add_class::<PyLexicon>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySimulator>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(align, m)?)?;
    m.add_function(wrap_pyfunction!(wer, m)?)?;
    m.add_function(wrap_pyfunction!(cer, m)?)?;
    m.add_function(wrap_pyfunction!(error_score, m)?)?;
    m.add_function(wrap_pyfunction!(load_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(save_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(prioritize, m)?)?;
    m.add_function(wrap_pyfunction!(select_within_budget, m)?)?;
    m.add_function(wrap_pyfunction!(duration_matched_budget, m)?)?;
    m.add_function(wrap_pyfunction!(submodular_utility, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(guilford_class, m)?)?;
    m.add_function(wrap_pyfunction!(improvement_over_random, m)?)?;
    m.add_function(wrap_pyfunction!(relative_reduction, m)?)?;
    Ok(())
}
