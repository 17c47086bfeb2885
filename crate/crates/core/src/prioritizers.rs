//! The six prioritization strategies and budget-constrained prefix selection.
//!
//! Score-ranked strategies sort by descending score; equal scores keep the
//! input order. Greedy strategies (phoneme-rich, PEP-D) pick one case at a
//! time against a running phoneme histogram and record the score each case
//! had when it was picked.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TestCase;
use crate::error::{Error, Result};
use crate::lexicon::{Histogram, Lexicon, PhonemeId, Unit};
use crate::predictors::external::{score_via_external, ExternalScorer};
use crate::predictors::{error_score, PhonemeErrorPredictor, SentenceFailurePredictor, WordErrorPredictor};

/// Additive smoothing inside the utility's logarithm.
pub const SMOOTHING: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    PhonemeRich,
    Pep,
    PepD,
    #[serde(rename = "sentence")]
    SentenceFailure,
    Prophet,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Random,
        Strategy::PhonemeRich,
        Strategy::Pep,
        Strategy::PepD,
        Strategy::SentenceFailure,
        Strategy::Prophet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::PhonemeRich => "phoneme-rich",
            Strategy::Pep => "pep",
            Strategy::PepD => "pep-d",
            Strategy::SentenceFailure => "sentence",
            Strategy::Prophet => "prophet",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCase {
    pub case: TestCase,
    pub score: f64,
    /// Position in the input list.
    pub original_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedSuite {
    pub entries: Vec<RankedCase>,
    pub strategy: Strategy,
    pub seed: u64,
}

impl RankedSuite {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cases(&self) -> impl Iterator<Item = &TestCase> {
        self.entries.iter().map(|e| &e.case)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.case.id.as_str()).collect()
    }
}

/// Sort by descending score, ties by input position.
fn rank_by_score(cases: &[TestCase], scores: Vec<f64>, strategy: Strategy) -> RankedSuite {
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    RankedSuite {
        entries: order
            .into_iter()
            .map(|i| RankedCase {
                case: cases[i].clone(),
                score: scores[i],
                original_index: i,
            })
            .collect(),
        strategy,
        seed: 0,
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

pub fn prioritize_random(cases: &[TestCase], seed: u64) -> RankedSuite {
    RankedSuite {
        entries: shuffled(cases.len(), seed)
            .into_iter()
            .map(|i| RankedCase {
                case: cases[i].clone(),
                score: 0.0,
                original_index: i,
            })
            .collect(),
        strategy: Strategy::Random,
        seed,
    }
}

/// Target phoneme distribution over the lexicon inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredDistribution(pub Vec<f64>);

impl DesiredDistribution {
    pub fn uniform(lex: &Lexicon) -> Self {
        let m = lex.inventory_size();
        DesiredDistribution(vec![1.0 / m as f64; m])
    }

    /// `PHONEME weight` per line; weights are normalized to sum to one and
    /// phonemes not listed get zero.
    pub fn load(path: impl AsRef<Path>, lex: &Lexicon) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pi = vec![0.0; lex.inventory_size()];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let mut parts = line.split_whitespace();
            let (Some(sym), Some(w), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(format!("expected `PHONEME weight`, got `{line}`")));
            };
            let id = lex
                .id(sym)
                .ok_or_else(|| parse_err(format!("phoneme `{sym}` not in the lexicon inventory")))?;
            let w: f64 = w.parse().map_err(|_| parse_err(format!("bad weight `{w}`")))?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(parse_err(format!("weight must be non-negative, got {w}")));
            }
            pi[id as usize] = w;
        }
        Self::from_weights(pi)
    }

    pub fn from_weights(mut pi: Vec<f64>) -> Result<Self> {
        let sum: f64 = pi.iter().sum();
        if sum.is_nan() || sum <= 0.0 {
            return Err(Error::invalid("desired distribution has no mass"));
        }
        pi.iter_mut().for_each(|p| *p /= sum);
        Ok(DesiredDistribution(pi))
    }
}

/// Running phoneme counts of a selected suite and the smoothed log utility
/// `J(S) = sum_i pi_i ln(f_i(S) + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubmodularState<'a> {
    pub counts: Vec<f64>,
    pi: &'a [f64],
}

impl<'a> SubmodularState<'a> {
    pub fn new(pi: &'a DesiredDistribution) -> Self {
        SubmodularState {
            counts: vec![0.0; pi.0.len()],
            pi: &pi.0,
        }
    }

    pub fn with_counts(pi: &'a DesiredDistribution, counts: Vec<f64>) -> Self {
        assert_eq!(counts.len(), pi.0.len(), "counts must span the inventory");
        SubmodularState { counts, pi: &pi.0 }
    }

    /// Gain of one phoneme's contribution: `pi_p [ln(f_p + d + 1) - ln(f_p + 1)]`.
    pub fn phoneme_gain(&self, phoneme: PhonemeId, count: u32) -> f64 {
        let p = phoneme as usize;
        let f = self.counts[p] + SMOOTHING;
        self.pi[p] * (f64::from(count) / f).ln_1p()
    }

    /// `J(S + s) - J(S)` for a case with sparse phoneme counts `delta`.
    pub fn gain(&self, delta: &[(PhonemeId, u32)]) -> f64 {
        delta.iter().map(|&(p, c)| self.phoneme_gain(p, c)).sum()
    }

    pub fn add(&mut self, delta: &[(PhonemeId, u32)]) {
        for &(p, c) in delta {
            self.counts[p as usize] += f64::from(c);
        }
    }

    pub fn value(&self) -> f64 {
        self.counts
            .iter()
            .zip(self.pi)
            .map(|(f, pi)| pi * (f + SMOOTHING).ln())
            .sum()
    }
}

/// `J(S)` of a list of cases (phoneme unit).
pub fn submodular_utility(lex: &Lexicon, cases: &[TestCase], pi: &DesiredDistribution) -> f64 {
    let mut state = SubmodularState::new(pi);
    for case in cases {
        state.add(&lex.phoneme_counts(&case.reference));
    }
    state.value()
}

/// Gain of adding `case` to a suite whose phoneme histogram is `hist`.
pub fn submodular_gain(lex: &Lexicon, hist: &Histogram, case: &TestCase, pi: &DesiredDistribution) -> Result<f64> {
    if hist.unit != Unit::Phoneme {
        return Err(Error::invalid("submodular gain needs a phoneme histogram"));
    }
    let mut counts = vec![0.0; lex.inventory_size()];
    for (sym, &c) in &hist.counts {
        let id = lex
            .id(sym)
            .ok_or_else(|| Error::invalid(format!("phoneme `{sym}` not in the inventory")))?;
        counts[id as usize] = c as f64;
    }
    let state = SubmodularState::with_counts(pi, counts);
    Ok(state.gain(&lex.phoneme_counts(&case.reference)))
}

/// Repeatedly pick the highest-scoring remaining case (lowest index on ties),
/// then fold it into the running state.
fn greedy<F>(
    cases: &[TestCase],
    pi: &DesiredDistribution,
    deltas: &[Vec<(PhonemeId, u32)>],
    score: F,
    strategy: Strategy,
) -> RankedSuite
where
    F: Fn(&SubmodularState<'_>, usize) -> f64,
{
    let mut state = SubmodularState::new(pi);
    let mut remaining: Vec<usize> = (0..cases.len()).collect();
    let mut entries = Vec::with_capacity(cases.len());
    while !remaining.is_empty() {
        let mut best_pos = 0;
        let mut best = f64::NEG_INFINITY;
        for (pos, &i) in remaining.iter().enumerate() {
            let s = score(&state, i);
            if s > best {
                best = s;
                best_pos = pos;
            }
        }
        let i = remaining.remove(best_pos);
        state.add(&deltas[i]);
        entries.push(RankedCase {
            case: cases[i].clone(),
            score: best,
            original_index: i,
        });
    }
    RankedSuite {
        entries,
        strategy,
        seed: 0,
    }
}

pub fn prioritize_phoneme_rich(cases: &[TestCase], lex: &Lexicon, pi: &DesiredDistribution) -> RankedSuite {
    let deltas: Vec<_> = cases.iter().map(|c| lex.phoneme_counts(&c.reference)).collect();
    greedy(
        cases,
        pi,
        &deltas,
        |state, i| state.gain(&deltas[i]),
        Strategy::PhonemeRich,
    )
}

/// Per-phoneme error probabilities of each case, in parallel.
fn phoneme_probs(cases: &[TestCase], pep: &PhonemeErrorPredictor, lex: &Lexicon) -> Vec<Vec<f64>> {
    cases
        .par_iter()
        .map(|c| pep.predict_phoneme_probs(lex, &c.reference))
        .collect()
}

/// Mean phoneme error probability (0 for a case without phonemes).
pub fn prioritize_pep(cases: &[TestCase], pep: &PhonemeErrorPredictor, lex: &Lexicon) -> RankedSuite {
    let scores = phoneme_probs(cases, pep, lex)
        .iter()
        .map(|p| error_score(p).unwrap_or(0.0))
        .collect();
    rank_by_score(cases, scores, Strategy::Pep)
}

/// Per-case terms of the diversity-weighted PEP score: for each phoneme, its
/// count in the case and the summed error probability of its occurrences.
#[derive(Debug, Clone)]
struct PepTerms {
    n: usize,
    per_phoneme: Vec<(PhonemeId, u32, f64)>,
}

fn pep_terms(lex: &Lexicon, text: &str, probs: &[f64]) -> PepTerms {
    let ph = lex.phonemize(text);
    debug_assert_eq!(ph.phonemes.len(), probs.len());
    let mut acc: std::collections::BTreeMap<PhonemeId, (u32, f64)> = Default::default();
    for (&p, &pr) in ph.phonemes.iter().zip(probs) {
        let e = acc.entry(p).or_default();
        e.0 += 1;
        e.1 += pr;
    }
    PepTerms {
        n: ph.phonemes.len(),
        per_phoneme: acc.into_iter().map(|(p, (c, s))| (p, c, s)).collect(),
    }
}

/// `(1/n) sum_phi c_phi(S, s) sum_{j: s_j = phi} Pr_j` where `c_phi` is the
/// utility gain restricted to phoneme `phi`.
fn pep_d_score(state: &SubmodularState<'_>, terms: &PepTerms) -> f64 {
    if terms.n == 0 {
        return 0.0;
    }
    let total: f64 = terms
        .per_phoneme
        .iter()
        .map(|&(p, c, prob_sum)| state.phoneme_gain(p, c) * prob_sum)
        .sum();
    total / terms.n as f64
}

pub fn prioritize_pep_d(
    cases: &[TestCase],
    pep: &PhonemeErrorPredictor,
    lex: &Lexicon,
    pi: &DesiredDistribution,
) -> RankedSuite {
    let probs = phoneme_probs(cases, pep, lex);
    let terms: Vec<PepTerms> = cases
        .iter()
        .zip(&probs)
        .map(|(c, p)| pep_terms(lex, &c.reference, p))
        .collect();
    let deltas: Vec<Vec<(PhonemeId, u32)>> = terms
        .iter()
        .map(|t| t.per_phoneme.iter().map(|&(p, c, _)| (p, c)).collect())
        .collect();
    greedy(
        cases,
        pi,
        &deltas,
        |state, i| pep_d_score(state, &terms[i]),
        Strategy::PepD,
    )
}

pub fn prioritize_sentence(cases: &[TestCase], sp: &SentenceFailurePredictor) -> RankedSuite {
    let scores = cases
        .par_iter()
        .map(|c| sp.predict_failure_prob(&c.reference))
        .collect();
    rank_by_score(cases, scores, Strategy::SentenceFailure)
}

/// Anything that yields per-token error probabilities for reference texts.
pub trait TokenScorer {
    fn token_probs(&self, cases: &[TestCase]) -> Result<Vec<Vec<f64>>>;
}

impl TokenScorer for WordErrorPredictor {
    fn token_probs(&self, cases: &[TestCase]) -> Result<Vec<Vec<f64>>> {
        Ok(cases
            .par_iter()
            .map(|c| self.predict_token_probs(&c.reference))
            .collect())
    }
}

impl TokenScorer for ExternalScorer {
    fn token_probs(&self, cases: &[TestCase]) -> Result<Vec<Vec<f64>>> {
        let texts: Vec<(String, String)> = cases.iter().map(|c| (c.id.clone(), c.reference.clone())).collect();
        score_via_external(self, &texts)
    }
}

/// Rank by error score, the mean token error probability.
pub fn prioritize_prophet(cases: &[TestCase], scorer: &dyn TokenScorer) -> Result<RankedSuite> {
    let probs = scorer.token_probs(cases)?;
    let scores = probs
        .iter()
        .zip(cases)
        .map(|(p, c)| error_score(p).map_err(|_| Error::invalid(format!("test case `{}` produced no tokens", c.id))))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_by_score(cases, scores, Strategy::Prophet))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSelection {
    pub selected: Vec<TestCase>,
    pub scores: Vec<f64>,
    pub budget_s: f64,
    pub used_s: f64,
}

/// Longest prefix whose total duration fits the budget. Stops at the first
/// case that would overflow; later, shorter cases are not considered.
pub fn select_within_budget(ranked: &RankedSuite, budget_s: f64) -> Result<BudgetSelection> {
    if budget_s.is_nan() || budget_s < 0.0 {
        return Err(Error::invalid(format!("budget must be non-negative, got {budget_s}")));
    }
    // absorbs summation-order rounding when the budget was itself a sum of durations
    let limit = budget_s + 1e-9 * budget_s.max(1.0);
    let mut used = 0.0;
    let mut selected = Vec::new();
    let mut scores = Vec::new();
    for e in &ranked.entries {
        if used + e.case.duration_s > limit {
            break;
        }
        used += e.case.duration_s;
        selected.push(e.case.clone());
        scores.push(e.score);
    }
    Ok(BudgetSelection {
        selected,
        scores,
        budget_s,
        used_s: used,
    })
}

/// Total duration of a seeded random sample of `k` cases. Uses the same
/// shuffle as [`prioritize_random`], so the random strategy under the same
/// seed selects exactly that sample.
pub fn duration_matched_budget(pool: &[TestCase], k: usize, seed: u64) -> Result<f64> {
    if k > pool.len() {
        return Err(Error::invalid(format!(
            "budget sample of {k} cases exceeds pool of {}",
            pool.len()
        )));
    }
    Ok(shuffled(pool.len(), seed)
        .into_iter()
        .take(k)
        .map(|i| pool[i].duration_s)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::OovPolicy;

    fn lex_ab() -> Lexicon {
        Lexicon::parse("A A\nB B\nAB A B\nC C\n", OovPolicy::Skip).unwrap()
    }

    fn case(id: &str, text: &str, dur: f64) -> TestCase {
        TestCase::new(id, text, dur)
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn random_is_seeded_permutation() {
        let cases: Vec<_> = (0..10).map(|i| case(&i.to_string(), "a", 1.0)).collect();
        let a = prioritize_random(&cases, 5);
        assert_eq!(a, prioritize_random(&cases, 5));
        let mut ids = a.ids();
        ids.sort();
        let mut orig: Vec<_> = cases.iter().map(|c| c.id.as_str()).collect();
        orig.sort();
        assert_eq!(ids, orig);
        assert!(a.scores().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn distinct_seeds_rarely_collide() {
        let cases: Vec<_> = (0..10).map(|i| case(&i.to_string(), "a", 1.0)).collect();
        let base = prioritize_random(&cases, 0).ids().join(",");
        let collisions = (1..=100u64)
            .filter(|&s| prioritize_random(&cases, s).ids().join(",") == base)
            .count();
        assert!(collisions < 5);
    }

    #[test]
    fn gain_examples() {
        // inventory {A, B}, uniform pi
        let lex = Lexicon::parse("A A\nB B\n", OovPolicy::Skip).unwrap();
        let pi = DesiredDistribution::uniform(&lex);
        let mut hist = Histogram::empty(&lex, Unit::Phoneme);
        hist.add("A", 1);
        hist.add("B", 10);
        let ga = submodular_gain(&lex, &hist, &case("x", "a", 1.0), &pi).unwrap();
        let gb = submodular_gain(&lex, &hist, &case("y", "b", 1.0), &pi).unwrap();
        assert!((ga - 0.5 * (3.0f64 / 2.0).ln()).abs() < 1e-12);
        assert!((gb - 0.5 * (12.0f64 / 11.0).ln()).abs() < 1e-12);
        assert!(ga > gb);
        assert!((ga - 0.2027).abs() < 1e-4 && (gb - 0.0435).abs() < 1e-4);
        // a case with no in-lexicon phonemes gains nothing
        assert_eq!(submodular_gain(&lex, &hist, &case("z", "zzz", 1.0), &pi).unwrap(), 0.0);
    }

    #[test]
    fn repeated_case_gains_less() {
        let lex = lex_ab();
        let pi = DesiredDistribution::uniform(&lex);
        let mut state = SubmodularState::new(&pi);
        let d = lex.phoneme_counts("ab");
        let first = state.gain(&d);
        state.add(&d);
        assert!(state.gain(&d) < first);
    }

    #[test]
    fn phoneme_rich_prefers_new_phonemes() {
        let lex = lex_ab();
        let pi = DesiredDistribution::uniform(&lex);
        let cases = vec![case("1", "a", 1.0), case("2", "a", 1.0), case("3", "b", 1.0)];
        let r = prioritize_phoneme_rich(&cases, &lex, &pi);
        assert_eq!(r.ids(), ["1", "3", "2"]);
        assert!(prioritize_phoneme_rich(&[], &lex, &pi).is_empty());
    }

    #[test]
    fn budget_selection() {
        let cases = vec![case("1", "a", 3.0), case("2", "a", 2.0), case("3", "a", 5.0)];
        let ranked = rank_by_score(&cases, vec![3.0, 2.0, 1.0], Strategy::Prophet);
        let s = select_within_budget(&ranked, 6.0).unwrap();
        assert_eq!(s.selected.len(), 2);
        assert_eq!(s.used_s, 5.0);
        assert!(select_within_budget(&ranked, 0.0).unwrap().selected.is_empty());
        assert_eq!(select_within_budget(&ranked, 100.0).unwrap().selected.len(), 3);
        assert!(select_within_budget(&ranked, -1.0).is_err());
    }

    #[test]
    fn strict_prefix_does_not_skip_ahead() {
        let cases = vec![case("1", "a", 3.0), case("2", "a", 5.0), case("3", "a", 1.0)];
        let ranked = rank_by_score(&cases, vec![3.0, 2.0, 1.0], Strategy::Prophet);
        let s = select_within_budget(&ranked, 4.5).unwrap();
        assert_eq!(s.selected.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), ["1"]);
    }

    #[test]
    fn score_sort_and_ties() {
        let cases = vec![case("1", "a", 1.0), case("2", "a", 1.0), case("3", "a", 1.0)];
        let r = rank_by_score(&cases, vec![0.9, 0.1, 0.5], Strategy::Prophet);
        assert_eq!(r.ids(), ["1", "3", "2"]);
        let r = rank_by_score(&cases, vec![0.5, 0.5, 0.5], Strategy::Prophet);
        assert_eq!(r.ids(), ["1", "2", "3"]);
    }

    #[test]
    fn matched_budget() {
        let pool: Vec<_> = (0..60).map(|i| case(&i.to_string(), "a", 3.0)).collect();
        assert!((duration_matched_budget(&pool, 50, 1).unwrap() - 150.0).abs() < 1e-9);
        assert!(duration_matched_budget(&pool, 61, 1).is_err());
        let mixed: Vec<_> = (0..60)
            .map(|i| case(&i.to_string(), "a", 1.0 + i as f64 / 7.0))
            .collect();
        let b = duration_matched_budget(&mixed, 20, 4).unwrap();
        assert_eq!(b, duration_matched_budget(&mixed, 20, 4).unwrap());
        // the random strategy under the same seed realizes exactly the sample
        let sel = select_within_budget(&prioritize_random(&mixed, 4), b).unwrap();
        assert_eq!(sel.selected.len(), 20);
    }

    #[test]
    fn desired_distribution_file() {
        let lex = lex_ab();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, b"# weights\nA 3\nB 1\n").unwrap();
        let pi = DesiredDistribution::load(f.path(), &lex).unwrap();
        assert_eq!(pi.0, [0.75, 0.25, 0.0]);
        std::io::Write::write_all(&mut f, b"Q 1\n").unwrap();
        assert!(DesiredDistribution::load(f.path(), &lex).is_err());
    }
}
