//! Effectiveness metrics, statistical tests and the end-to-end study runner.

mod report;
mod stats;
mod study;

pub use report::{
    format_results, format_statistics, read_results, render_summary, statistics, write_report, write_results,
    write_statistics, StatRow, FEATURE_NAMES,
};
pub use stats::{
    average_ranks, guilford_class, spearman, wilcoxon_signed_rank, Alternative, Method, Strength, TestOutcome,
    EXACT_MAX_N,
};
pub use study::{partition, run_study, Budget, Oracle, Partition, StudyResult, StudySettings};

use crate::alignment::{cer, wer_text};
use crate::corpus::TestCase;
use crate::error::{Error, Result};
use crate::lexicon::{distance_to_uniform, Lexicon, Unit};
use crate::prioritizers::{submodular_utility, DesiredDistribution};

/// `(wer_a - wer_rnd) / wer_rnd`: how many more errors a method reveals than
/// random selection.
pub fn rq1_relative_improvement(wer_a: f64, wer_rnd: f64) -> Result<f64> {
    if wer_rnd.is_nan() || wer_rnd <= 0.0 {
        return Err(Error::invalid(format!("baseline WER must be positive, got {wer_rnd}")));
    }
    Ok((wer_a - wer_rnd) / wer_rnd)
}

/// `(wer_orig - wer_a) / wer_orig`: the relative WER reduction after a change.
pub fn rq2_relative_improvement(wer_orig: f64, wer_a: f64) -> Result<f64> {
    if wer_orig.is_nan() || wer_orig <= 0.0 {
        return Err(Error::invalid(format!("original WER must be positive, got {wer_orig}")));
    }
    Ok((wer_orig - wer_a) / wer_orig)
}

fn hypothesis_pairs(cases: &[TestCase]) -> Result<Vec<(&str, &str)>> {
    cases
        .iter()
        .map(|c| {
            c.hypothesis
                .as_deref()
                .map(|h| (c.reference.as_str(), h))
                .ok_or_else(|| Error::invalid(format!("test case `{}` has no hypothesis", c.id)))
        })
        .collect()
}

/// Pooled WER and CER of transcribed cases. An empty list scores `(0, 0)`.
pub fn prefix_error_rates(cases: &[TestCase]) -> Result<(f64, f64)> {
    let pairs = hypothesis_pairs(cases)?;
    let wer = wer_text(&pairs).or_else(|e| if cases.is_empty() { Ok(0.0) } else { Err(e) })?;
    let cer = cer(&pairs).or_else(|e| if cases.is_empty() { Ok(0.0) } else { Err(e) })?;
    Ok((wer, cer))
}

/// The three fine-tuning-set features: WER of the transcribed prefix,
/// distance of its triphone histogram from uniform, and its submodular
/// utility. An empty prefix (or one without any triphone) has distance 0.
pub fn extract_rq3_features(prefix: &[TestCase], lex: &Lexicon, pi: &DesiredDistribution) -> Result<[f64; 3]> {
    let (wer, _) = prefix_error_rates(prefix)?;
    let hist = lex.histogram(prefix, Unit::Triphone);
    let distance = if hist.total == 0 {
        0.0
    } else {
        distance_to_uniform(&hist)?
    };
    Ok([wer, distance, submodular_utility(lex, prefix, pi)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::OovPolicy;

    #[test]
    fn relative_improvements() {
        assert!((rq1_relative_improvement(0.25, 0.20).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(rq1_relative_improvement(0.3, 0.3).unwrap(), 0.0);
        assert!(rq1_relative_improvement(0.3, 0.0).is_err());
        assert!((rq2_relative_improvement(0.20, 0.15).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(rq2_relative_improvement(0.2, 0.2).unwrap(), 0.0);
        assert!((rq2_relative_improvement(0.2, 0.3).unwrap() + 0.5).abs() < 1e-12);
        assert!(rq2_relative_improvement(0.0, 0.1).is_err());
    }

    #[test]
    fn features_of_correct_prefix() {
        let lex = Lexicon::parse("A  AH\nB  B\n", OovPolicy::Skip).unwrap();
        let pi = DesiredDistribution::uniform(&lex);
        let prefix = vec![TestCase::new("1", "a b", 1.0).with_hypothesis("a b")];
        let f = extract_rq3_features(&prefix, &lex, &pi).unwrap();
        assert_eq!(f[0], 0.0);
        assert!(f[1] > 0.0);
        assert!((f[2] - 2.0 * 0.5 * 2f64.ln()).abs() < 1e-12);
        let missing = vec![TestCase::new("1", "a b", 1.0)];
        assert!(extract_rq3_features(&missing, &lex, &pi).is_err());
        assert_eq!(extract_rq3_features(&[], &lex, &pi).unwrap(), [0.0, 0.0, 0.0]);
    }
}
