use proptest::prelude::*;
use voxrank::alignment::{align, edit_distance, EditKind};
use voxrank::evalstats::{spearman, wilcoxon_signed_rank, Alternative};
use voxrank::predictors::error_score;
use voxrank::prioritizers::{
    prioritize_phoneme_rich, prioritize_random, select_within_budget, submodular_utility, DesiredDistribution,
};
use voxrank::{Lexicon, OovPolicy, TestCase};

fn tokens() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..4, 0..10)
}

fn textbook_distance(r: &[u8], h: &[u8]) -> usize {
    let mut d = vec![vec![0usize; h.len() + 1]; r.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=r.len() {
        for j in 1..=h.len() {
            let sub = d[i - 1][j - 1] + usize::from(r[i - 1] != h[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[r.len()][h.len()]
}

fn small_lexicon() -> Lexicon {
    Lexicon::parse(
        "CAT  K AE T\nDOG  D AO G\nSHIP  SH IH P\nSEA  S IY\nTHE  DH AH\nZOO  Z UW\nA  AH\n",
        OovPolicy::Skip,
    )
    .unwrap()
}

fn sentences() -> impl Strategy<Value = Vec<(String, f64)>> {
    let word = prop::sample::select(vec!["cat", "dog", "ship", "sea", "the", "zoo", "a"]);
    let sentence = prop::collection::vec(word, 1..6).prop_map(|w| w.join(" "));
    prop::collection::vec((sentence, 0.5f64..8.0), 1..12)
}

fn to_cases(raw: &[(String, f64)]) -> Vec<TestCase> {
    raw.iter()
        .enumerate()
        .map(|(i, (t, d))| TestCase::new(format!("c{i}"), t.as_str(), *d))
        .collect()
}

proptest! {
    #[test]
    fn alignment_cost_matches_textbook_recurrence(r in tokens(), h in tokens()) {
        let a = align(&r, &h);
        prop_assert_eq!(a.distance, textbook_distance(&r, &h));
        prop_assert_eq!(a.counts().errors(), a.distance);
        prop_assert_eq!(edit_distance(&r, &h), a.distance);
        // replaying the operations reproduces both sides
        let mut ri = 0;
        let mut hi = 0;
        for op in &a.ops {
            match op.kind {
                EditKind::Correct => { prop_assert_eq!(r[ri], h[hi]); ri += 1; hi += 1; }
                EditKind::Substitute => { prop_assert_ne!(r[ri], h[hi]); ri += 1; hi += 1; }
                EditKind::Delete => ri += 1,
                EditKind::Insert => hi += 1,
            }
        }
        prop_assert_eq!((ri, hi), (r.len(), h.len()));
    }

    #[test]
    fn edit_distance_is_a_metric(a in tokens(), b in tokens(), c in tokens()) {
        prop_assert_eq!(edit_distance(&a, &a), 0);
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
    }

    #[test]
    fn error_score_stays_between_extremes(probs in prop::collection::vec(0.0f64..=1.0, 1..40)) {
        let s = error_score(&probs).unwrap();
        let lo = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
        let mut reversed = probs.clone();
        reversed.reverse();
        prop_assert!((error_score(&reversed).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn greedy_gains_are_non_increasing_and_telescope(raw in sentences()) {
        let lex = small_lexicon();
        let pi = DesiredDistribution::uniform(&lex);
        let cases = to_cases(&raw);
        let ranked = prioritize_phoneme_rich(&cases, &lex, &pi);
        prop_assert_eq!(ranked.len(), cases.len());
        for w in ranked.scores().windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "gain rose from {} to {}", w[0], w[1]);
        }
        let total: f64 = ranked.scores().iter().sum();
        let utility = submodular_utility(&lex, &cases, &pi);
        prop_assert!((total - utility).abs() < 1e-9, "gains {} vs utility {}", total, utility);
        // each recorded gain equals the recomputed marginal utility
        let order: Vec<TestCase> = ranked.cases().cloned().collect();
        for k in 0..order.len() {
            let before = submodular_utility(&lex, &order[..k], &pi);
            let after = submodular_utility(&lex, &order[..k + 1], &pi);
            prop_assert!((after - before - ranked.entries[k].score).abs() < 1e-9);
        }
    }

    #[test]
    fn random_ranking_is_a_seeded_permutation(raw in sentences(), seed in any::<u64>()) {
        let cases = to_cases(&raw);
        let a = prioritize_random(&cases, seed);
        let b = prioritize_random(&cases, seed);
        prop_assert_eq!(a.ids(), b.ids());
        let mut ids: Vec<&str> = a.ids();
        ids.sort_unstable();
        let mut expected: Vec<&str> = cases.iter().map(|c| c.id.as_str()).collect();
        expected.sort_unstable();
        prop_assert_eq!(ids, expected);
    }

    #[test]
    fn budget_selection_is_a_fitting_prefix(raw in sentences(), budget in 0.0f64..40.0) {
        let cases = to_cases(&raw);
        let ranked = prioritize_random(&cases, 3);
        let sel = select_within_budget(&ranked, budget).unwrap();
        prop_assert!(sel.used_s <= budget + 1e-9);
        let n = sel.selected.len();
        prop_assert_eq!(&ranked.ids()[..n], &sel.selected.iter().map(|c| c.id.as_str()).collect::<Vec<_>>()[..]);
        if n < ranked.len() {
            prop_assert!(sel.used_s + ranked.entries[n].case.duration_s > budget);
        }
    }

    #[test]
    fn spearman_ignores_monotone_transforms(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 4..25)
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let x2: Vec<f64> = x.iter().map(|v| v.exp().ln_1p() + 3.0 * v).collect();
        match (spearman(&x, &y), spearman(&x2, &y)) {
            (Ok((r1, t1)), Ok((r2, t2))) => {
                prop_assert!((r1 - r2).abs() < 1e-9);
                prop_assert!((t1.p_value - t2.p_value).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&r1));
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "inconsistent results {:?} / {:?}", a, b),
        }
    }

    #[test]
    fn wilcoxon_two_sided_doubles_the_smaller_tail(
        pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..15)
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let greater = wilcoxon_signed_rank(&a, &b, Alternative::Greater).unwrap();
        let less = wilcoxon_signed_rank(&a, &b, Alternative::Less).unwrap();
        let swapped = wilcoxon_signed_rank(&b, &a, Alternative::Less).unwrap();
        prop_assert!((greater.p_value - swapped.p_value).abs() < 1e-12);
        let two = wilcoxon_signed_rank(&a, &b, Alternative::TwoSided).unwrap();
        let doubled = (2.0 * greater.p_value.min(less.p_value)).min(1.0);
        prop_assert!((two.p_value - doubled).abs() < 1e-12);
    }
}
