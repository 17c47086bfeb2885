//! Result tables, statistics tables and the plain-text summary.
//!
//! Tables are tab-separated with a header row. Floats use Rust's shortest
//! round-trip formatting, so rereading a results table reproduces the exact
//! values and rerunning a study reproduces the exact bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::rq1_relative_improvement;
use super::stats::{guilford_class, spearman, wilcoxon_signed_rank, Alternative, TestOutcome};
use super::study::StudyResult;
use crate::error::{Error, Result};
use crate::prioritizers::Strategy;

pub const FEATURE_NAMES: [&str; 3] = ["feature-wer", "feature-triphone-distance", "feature-submodular"];

const RESULT_COLUMNS: [&str; 14] = [
    "dataset",
    "strategy",
    "seed",
    "budget",
    "budget_s",
    "used_s",
    "cases",
    "wer",
    "cer",
    FEATURE_NAMES[0],
    FEATURE_NAMES[1],
    FEATURE_NAMES[2],
    "proxy_improvement",
    "prefix_ids",
];

const NA: &str = "NA";

/// Shortest round-trip text for a float, with negative zero printed as `0`.
fn num(x: f64) -> String {
    (x + 0.0).to_string()
}

pub fn format_results(results: &[StudyResult]) -> String {
    let mut out = RESULT_COLUMNS.join("\t");
    out.push('\n');
    for r in results {
        let proxy = r.proxy_improvement.map_or(NA.to_string(), num);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.dataset,
            r.strategy,
            r.seed,
            r.budget,
            num(r.budget_s),
            num(r.used_s),
            r.prefix_ids.len(),
            num(r.wer),
            num(r.cer),
            num(r.features[0]),
            num(r.features[1]),
            num(r.features[2]),
            proxy,
            r.prefix_ids.join(",")
        );
    }
    out
}

pub fn write_results(path: impl AsRef<Path>, results: &[StudyResult]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_results(results)).map_err(|e| Error::io(path, e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<StudyResult>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.split('\t').eq(RESULT_COLUMNS.iter().copied()) => {}
        _ => return Err(bad(1, "missing or unexpected results header".into())),
    }
    let mut results = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != RESULT_COLUMNS.len() {
            return Err(bad(
                lineno,
                format!("expected {} columns, found {}", RESULT_COLUMNS.len(), f.len()),
            ));
        }
        let field = |k: usize| -> Result<f64> {
            f[k].parse::<f64>().map_err(|_| {
                bad(
                    lineno,
                    format!("column `{}`: `{}` is not a number", RESULT_COLUMNS[k], f[k]),
                )
            })
        };
        let strategy: Strategy = f[1].parse().map_err(|e: Error| bad(lineno, e.to_string()))?;
        let seed = f[2]
            .parse::<u64>()
            .map_err(|_| bad(lineno, format!("seed `{}` is not an unsigned integer", f[2])))?;
        let prefix_ids: Vec<String> = if f[13].is_empty() {
            Vec::new()
        } else {
            f[13].split(',').map(str::to_string).collect()
        };
        results.push(StudyResult {
            dataset: f[0].to_string(),
            strategy,
            seed,
            budget: f[3].to_string(),
            budget_s: field(4)?,
            used_s: field(5)?,
            prefix_ids,
            wer: field(7)?,
            cer: field(8)?,
            features: [field(9)?, field(10)?, field(11)?],
            proxy_improvement: if f[12] == NA { None } else { Some(field(12)?) },
        });
    }
    Ok(results)
}

/// One row of the statistics table.
#[derive(Debug, Clone, PartialEq)]
pub struct StatRow {
    pub test: &'static str,
    pub group: String,
    pub a: String,
    pub b: String,
    pub alternative: &'static str,
    pub n: usize,
    /// `None` when the statistic is undefined for the group (constant input).
    pub outcome: Option<TestOutcome>,
    pub significant: bool,
    pub note: String,
}

/// Distinct values in order of first appearance.
fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|x| x == s) {
            out.push(s.to_string());
        }
    }
    out
}

fn strategies_present(results: &[StudyResult]) -> Vec<Strategy> {
    Strategy::ALL
        .into_iter()
        .filter(|s| results.iter().any(|r| r.strategy == *s))
        .collect()
}

type CellKey<'a> = (&'a str, &'a str, u64);

fn wer_by_cell(results: &[StudyResult], strategy: Strategy) -> BTreeMap<CellKey<'_>, f64> {
    results
        .iter()
        .filter(|r| r.strategy == strategy)
        .map(|r| ((r.dataset.as_str(), r.budget.as_str(), r.seed), r.wer))
        .collect()
}

/// Pairwise one-sided Wilcoxon tests on prefix WER (`A > B`), pooled over
/// all cells and per budget, followed by Spearman correlations of each
/// feature with the proxy improvement per (dataset, budget) group.
pub fn statistics(results: &[StudyResult], alpha: f64) -> Vec<StatRow> {
    let mut rows = Vec::new();
    let strategies = strategies_present(results);
    let budgets = first_seen(results.iter().map(|r| r.budget.as_str()));
    let by_strategy: Vec<_> = strategies.iter().map(|&s| wer_by_cell(results, s)).collect();

    let mut groups = vec![None];
    groups.extend(budgets.iter().map(Some));
    for group in &groups {
        for (i, a) in strategies.iter().enumerate() {
            for (j, b) in strategies.iter().enumerate() {
                if i == j {
                    continue;
                }
                let (mut xa, mut xb) = (Vec::new(), Vec::new());
                for (key, wa) in &by_strategy[i] {
                    if group.is_some_and(|g| g != key.1) {
                        continue;
                    }
                    if let Some(wb) = by_strategy[j].get(key) {
                        xa.push(*wa);
                        xb.push(*wb);
                    }
                }
                if xa.is_empty() {
                    continue;
                }
                let outcome = wilcoxon_signed_rank(&xa, &xb, Alternative::Greater).ok();
                rows.push(StatRow {
                    test: "wilcoxon-wer",
                    group: group.map_or("all".to_string(), |g| g.clone()),
                    a: a.to_string(),
                    b: b.to_string(),
                    alternative: "greater",
                    n: xa.len(),
                    significant: outcome.is_some_and(|o| o.p_value < alpha),
                    outcome,
                    note: String::new(),
                });
            }
        }
    }

    let mut rq3_groups: BTreeMap<(usize, usize), Vec<&StudyResult>> = BTreeMap::new();
    let datasets = first_seen(results.iter().map(|r| r.dataset.as_str()));
    for r in results.iter().filter(|r| r.proxy_improvement.is_some()) {
        let d = datasets.iter().position(|x| *x == r.dataset).expect("seen");
        let b = budgets.iter().position(|x| *x == r.budget).expect("seen");
        rq3_groups.entry((d, b)).or_default().push(r);
    }
    for ((d, b), members) in rq3_groups {
        let proxy: Vec<f64> = members.iter().map(|r| r.proxy_improvement.expect("filtered")).collect();
        for (k, name) in FEATURE_NAMES.iter().enumerate() {
            let feature: Vec<f64> = members.iter().map(|r| r.features[k]).collect();
            let (outcome, note) = match spearman(&feature, &proxy) {
                Ok((rho, o)) => (Some(o), guilford_class(rho).name().to_string()),
                Err(e) => (None, format!("undefined: {e}")),
            };
            rows.push(StatRow {
                test: "spearman",
                group: format!("{}/{}", datasets[d], budgets[b]),
                a: name.to_string(),
                b: "proxy-improvement".into(),
                alternative: "two-sided",
                n: members.len(),
                significant: outcome.is_some_and(|o| o.p_value < alpha),
                outcome,
                note,
            });
        }
    }
    rows
}

pub fn format_statistics(rows: &[StatRow]) -> String {
    let mut out =
        String::from("test\tgroup\ta\tb\talternative\tn\tn_effective\tstatistic\tp_value\tmethod\tsignificant\tnote\n");
    for r in rows {
        let (ne, stat, p, method) = match &r.outcome {
            Some(o) => (
                o.n_effective.to_string(),
                num(o.statistic),
                num(o.p_value),
                o.method.name().to_string(),
            ),
            None => (NA.into(), NA.into(), NA.into(), NA.into()),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.test, r.group, r.a, r.b, r.alternative, r.n, ne, stat, p, method, r.significant, r.note
        );
    }
    out
}

pub fn write_statistics(path: impl AsRef<Path>, rows: &[StatRow]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_statistics(rows)).map_err(|e| Error::io(path, e))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Row keys, strategy columns and the mean WER in each cell.
type WerTable = (Vec<(String, String)>, Vec<Strategy>, Vec<Vec<Option<f64>>>);

/// Mean prefix WER per (dataset, budget) row and strategy column.
fn wer_table(results: &[StudyResult]) -> WerTable {
    let strategies = strategies_present(results);
    let keys: Vec<(String, String)> = {
        let mut keys: Vec<(String, String)> = Vec::new();
        for r in results {
            let k = (r.dataset.clone(), r.budget.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys
    };
    let cells = keys
        .iter()
        .map(|(d, b)| {
            strategies
                .iter()
                .map(|s| {
                    let w: Vec<f64> = results
                        .iter()
                        .filter(|r| r.strategy == *s && &r.dataset == d && &r.budget == b)
                        .map(|r| r.wer)
                        .collect();
                    (!w.is_empty()).then(|| mean(&w))
                })
                .collect()
        })
        .collect();
    (keys, strategies, cells)
}

/// Plain-text overview: the WER table with best (`*`) and worst (`-`) marks
/// per row, mean relative improvement over random, significant pairwise
/// wins, and the feature correlation tally.
pub fn render_summary(results: &[StudyResult], rows: &[StatRow], alpha: f64) -> String {
    let mut out = String::new();
    let (keys, strategies, cells) = wer_table(results);
    let _ = writeln!(
        out,
        "Prefix WER (%) by dataset and budget, mean over seeds (* best, - worst)"
    );
    let _ = writeln!(out);
    let dw = keys.iter().map(|k| k.0.len()).max().unwrap_or(0).max("dataset".len());
    let bw = keys.iter().map(|k| k.1.len()).max().unwrap_or(0).max("budget".len());
    let cw: Vec<usize> = strategies.iter().map(|s| s.name().len().max(8)).collect();
    let _ = write!(out, "{:<dw$}  {:<bw$}", "dataset", "budget");
    for (s, w) in strategies.iter().zip(&cw) {
        let _ = write!(out, "  {:>w$}", s.name());
    }
    out.push('\n');
    for ((d, b), row) in keys.iter().zip(&cells) {
        let present: Vec<f64> = row.iter().flatten().copied().collect();
        let best = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let worst = present.iter().copied().fold(f64::INFINITY, f64::min);
        let _ = write!(out, "{d:<dw$}  {b:<bw$}");
        for (cell, w) in row.iter().zip(&cw) {
            let text = match cell {
                None => NA.to_string(),
                Some(v) => {
                    let mark = if present.len() > 1 && *v == best {
                        "*"
                    } else if present.len() > 1 && *v == worst {
                        "-"
                    } else {
                        " "
                    };
                    format!("{:.2}{mark}", v * 100.0)
                }
            };
            let _ = write!(out, "  {text:>w$}");
        }
        out.push('\n');
    }

    if let Some(rnd) = strategies.iter().position(|s| *s == Strategy::Random) {
        let _ = writeln!(out);
        let _ = writeln!(out, "Mean relative improvement over random");
        for (si, s) in strategies.iter().enumerate() {
            if si == rnd {
                continue;
            }
            let imps: Vec<f64> = cells
                .iter()
                .filter_map(|row| match (row[si], row[rnd]) {
                    (Some(a), Some(r)) => rq1_relative_improvement(a, r).ok(),
                    _ => None,
                })
                .collect();
            let text = if imps.is_empty() {
                NA.to_string()
            } else {
                format!("{:+.2}%", mean(&imps) * 100.0)
            };
            let _ = writeln!(out, "  {:<14}{text}", s.name());
        }
    }

    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "One-sided Wilcoxon signed-rank on prefix WER, all cells (alpha = {alpha})"
    );
    let wins: Vec<&StatRow> = rows
        .iter()
        .filter(|r| r.test == "wilcoxon-wer" && r.group == "all" && r.significant)
        .collect();
    if wins.is_empty() {
        let _ = writeln!(out, "  no significant differences");
    }
    for r in wins {
        let p = r.outcome.map_or(f64::NAN, |o| o.p_value);
        let _ = writeln!(out, "  {} > {}  (p = {p:.4}, n = {})", r.a, r.b, r.n);
    }

    let spearman_rows: Vec<&StatRow> = rows.iter().filter(|r| r.test == "spearman").collect();
    if !spearman_rows.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Spearman correlation of prefix features with proxy improvement (alpha = {alpha})"
        );
        for name in FEATURE_NAMES {
            let mine: Vec<&&StatRow> = spearman_rows.iter().filter(|r| r.a == name).collect();
            let positive = mine
                .iter()
                .filter(|r| r.significant && r.outcome.is_some_and(|o| o.statistic > 0.0))
                .count();
            let negative = mine
                .iter()
                .filter(|r| r.significant && r.outcome.is_some_and(|o| o.statistic < 0.0))
                .count();
            let mut classes: BTreeMap<&str, usize> = BTreeMap::new();
            for r in mine.iter().filter(|r| r.significant) {
                *classes.entry(r.note.as_str()).or_default() += 1;
            }
            let classes: Vec<String> = classes.iter().map(|(k, v)| format!("{k} {v}")).collect();
            let _ = writeln!(
                out,
                "  {:<27}{} groups: {} positive, {} negative significant [{}]",
                name,
                mine.len(),
                positive,
                negative,
                classes.join(", ")
            );
        }
    }
    out
}

/// Write `results.tsv`, `statistics.tsv` and `summary.txt` into `dir`.
pub fn write_report(dir: impl AsRef<Path>, results: &[StudyResult], alpha: f64) -> Result<Vec<StatRow>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_results(dir.join("results.tsv"), results)?;
    let rows = statistics(results, alpha);
    write_statistics(dir.join("statistics.tsv"), &rows)?;
    let summary = dir.join("summary.txt");
    fs::write(&summary, render_summary(results, &rows, alpha)).map_err(|e| Error::io(&summary, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(strategy: Strategy, budget: &str, seed: u64, wer: f64, proxy: f64) -> StudyResult {
        StudyResult {
            dataset: "d".into(),
            strategy,
            seed,
            budget: budget.into(),
            budget_s: 10.0,
            used_s: 9.5,
            prefix_ids: vec!["a".into(), "b".into()],
            wer,
            cer: wer / 2.0,
            features: [wer, 0.1 + seed as f64, 1.0 / 3.0],
            proxy_improvement: Some(proxy),
        }
    }

    fn sample() -> Vec<StudyResult> {
        let mut v = Vec::new();
        for seed in 0..6 {
            v.push(result(
                Strategy::Random,
                "k5",
                seed,
                0.1 + seed as f64 * 0.01,
                0.01 * seed as f64,
            ));
            v.push(result(
                Strategy::Prophet,
                "k5",
                seed,
                0.3 + seed as f64 * 0.02,
                0.2 + 0.01 * seed as f64,
            ));
        }
        v
    }

    #[test]
    fn results_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.tsv");
        let mut rs = sample();
        rs[0].proxy_improvement = None;
        rs[1].prefix_ids.clear();
        write_results(&path, &rs).unwrap();
        assert_eq!(read_results(&path).unwrap(), rs);
    }

    #[test]
    fn statistics_and_summary() {
        let rs = sample();
        let rows = statistics(&rs, 0.05);
        let win = rows
            .iter()
            .find(|r| r.test == "wilcoxon-wer" && r.group == "all" && r.a == "prophet")
            .unwrap();
        assert_eq!(win.outcome.unwrap().p_value, 1.0 / 64.0);
        assert!(win.significant);
        let corr = rows
            .iter()
            .find(|r| r.test == "spearman" && r.a == FEATURE_NAMES[0])
            .unwrap();
        assert!(corr.significant && corr.outcome.unwrap().statistic > 0.0);
        let constant = rows
            .iter()
            .find(|r| r.test == "spearman" && r.a == FEATURE_NAMES[2])
            .unwrap();
        assert!(constant.outcome.is_none());
        let text = render_summary(&rs, &rows, 0.05);
        assert!(text.contains("prophet > random"));
        assert!(text.contains("*"));
    }
}
