//! Evaluation metrics computed offline from run reports: pass@k, average
//! pass rate of the best candidate (APR), test-case coverage of all
//! candidates (TCC), their gap, and the crossover combination rate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Method, RunReport};
use crate::model::{LineageKind, Signature};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("combination indicator needs at least two parents, got {0}")]
    TooFewParents(usize),
    #[error("no runs to summarize")]
    Empty,
}

/// Unbiased estimator `1 - C(R-c, k) / C(R, k)`, with `C(a, b) = 0` for `a < b`.
pub fn pass_at_k(c: usize, r: usize, k: usize) -> f64 {
    assert!(c <= r && k >= 1 && k <= r, "pass@k needs 0 <= c <= R and 1 <= k <= R");
    if r - c < k {
        return 1.0;
    }
    // C(R-c, k) / C(R, k) = Π_{i=R-c+1}^{R} (1 - k/i)
    let ratio: f64 = (r - c + 1..=r).map(|i| 1.0 - k as f64 / i as f64).product();
    1.0 - ratio
}

/// Plain success fraction `c / R`.
pub fn pass_fraction(c: usize, r: usize) -> f64 {
    assert!(r >= 1 && c <= r);
    c as f64 / r as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PassAtKEstimator {
    #[default]
    Unbiased,
    Fraction,
}

impl PassAtKEstimator {
    /// `Fraction` ignores `k`.
    pub fn estimate(self, c: usize, r: usize, k: usize) -> f64 {
        match self {
            PassAtKEstimator::Unbiased => pass_at_k(c, r, k),
            PassAtKEstimator::Fraction => pass_fraction(c, r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combination {
    Combined,
    NotCombined,
    Excluded,
}

/// Strips every test passed by two or more parents, then asks whether the
/// child keeps at least one remaining test of every parent. Events where
/// some parent has nothing distinctive left are excluded.
pub fn combination_indicator(parents: &[Signature], child: &Signature) -> Result<Combination, MetricsError> {
    if parents.len() < 2 {
        return Err(MetricsError::TooFewParents(parents.len()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for p in parents {
        for t in p.iter() {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    let mut all_hit = true;
    for p in parents {
        let distinct: Vec<usize> = p.iter().filter(|t| counts[t] == 1).collect();
        if distinct.is_empty() {
            return Ok(Combination::Excluded);
        }
        if !distinct.iter().any(|&t| child.contains(t)) {
            all_hit = false;
        }
    }
    Ok(if all_hit {
        Combination::Combined
    } else {
        Combination::NotCombined
    })
}

/// Combined events over non-excluded events; `None` when nothing counts.
pub fn combination_rate(events: &[Combination]) -> Option<f64> {
    let counted = events.iter().filter(|e| **e != Combination::Excluded).count();
    if counted == 0 {
        return None;
    }
    let combined = events.iter().filter(|e| **e == Combination::Combined).count();
    Some(combined as f64 / counted as f64)
}

/// Highest `|ψ| / M` over the signatures, 0 for none.
pub fn best_pass_rate(signatures: &[Signature], m: usize) -> f64 {
    signatures.iter().map(Signature::len).max().unwrap_or(0) as f64 / m as f64
}

/// `|∪ ψ| / M`, 0 for none.
pub fn union_coverage(signatures: &[Signature], m: usize) -> f64 {
    let union: BTreeSet<usize> = signatures.iter().flat_map(|s| s.iter()).collect();
    union.len() as f64 / m as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossoverEvent {
    pub parents: Vec<Signature>,
    pub child: Signature,
}

/// What the metrics need from one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task_id: String,
    pub run_index: usize,
    pub method: Method,
    pub suite_size: usize,
    pub solved: bool,
    /// Signatures of generated candidates; the seed is not included.
    pub signatures: Vec<Signature>,
    pub crossover_events: Vec<CrossoverEvent>,
    pub generator_calls: usize,
    pub estimated_cost: f64,
    pub latency_ms: u64,
}

impl RunSummary {
    pub fn from_report(report: &RunReport) -> Self {
        let signatures = report.generated().map(|c| c.signature().clone()).collect();
        let crossover_events = report
            .candidates
            .iter()
            .filter(|c| c.lineage().kind == LineageKind::Crossover)
            .map(|c| CrossoverEvent {
                parents: c
                    .lineage()
                    .parents
                    .iter()
                    .filter_map(|p| report.candidate(*p))
                    .map(|p| p.signature().clone())
                    .collect(),
                child: c.signature().clone(),
            })
            .collect();
        Self {
            task_id: report.task_id.clone(),
            run_index: report.run_index,
            method: report.method,
            suite_size: report.suite_size,
            solved: report.solved,
            signatures,
            crossover_events,
            generator_calls: report.generator_calls,
            estimated_cost: report.exchanges.iter().map(|e| e.estimated_cost).sum(),
            latency_ms: report.exchanges.iter().map(|e| e.latency_ms).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsInput {
    pub runs: Vec<RunSummary>,
}

impl MetricsInput {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a RunReport>) -> Self {
        Self {
            runs: reports.into_iter().map(RunSummary::from_report).collect(),
        }
    }
}

/// Mean over runs of the best candidate's pass rate.
pub fn avg_pass_rate(runs: &[RunSummary]) -> f64 {
    mean(runs.iter().map(|r| best_pass_rate(&r.signatures, r.suite_size)))
}

/// Mean over runs of the union coverage of all candidates.
pub fn test_case_coverage(runs: &[RunSummary]) -> f64 {
    mean(runs.iter().map(|r| union_coverage(&r.signatures, r.suite_size)))
}

/// `TCC - APR` over the same runs.
pub fn coverage_gap(runs: &[RunSummary]) -> f64 {
    test_case_coverage(runs) - avg_pass_rate(runs)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub tasks: usize,
    pub runs: usize,
    pub estimator: PassAtKEstimator,
    /// pass@k for each requested `k` that every task has enough runs for.
    pub pass_at_k: BTreeMap<usize, f64>,
    pub apr: f64,
    pub tcc: f64,
    pub delta: f64,
    pub crossover_events: usize,
    pub excluded_events: usize,
    pub combination_rate: Option<f64>,
    pub avg_generator_calls: f64,
    pub avg_cost: f64,
    pub avg_latency_s: f64,
}

/// Metrics per method, in method order.
pub fn compute_metrics(
    input: &MetricsInput,
    ks: &[usize],
    estimator: PassAtKEstimator,
) -> Result<Vec<MethodMetrics>, MetricsError> {
    if input.runs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut by_method: BTreeMap<&'static str, Vec<&RunSummary>> = BTreeMap::new();
    for run in &input.runs {
        by_method.entry(run.method.as_str()).or_default().push(run);
    }
    let mut out = Vec::new();
    for runs in by_method.into_values() {
        let method = runs[0].method;
        let mut per_task: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for r in &runs {
            let e = per_task.entry(&r.task_id).or_insert((0, 0));
            e.0 += r.solved as usize;
            e.1 += 1;
        }
        let min_runs = per_task.values().map(|(_, r)| *r).min().unwrap_or(0);
        let mut pass = BTreeMap::new();
        for &k in ks {
            if k >= 1 && k <= min_runs {
                let v = mean(per_task.values().map(|&(c, r)| estimator.estimate(c, r, k)));
                pass.insert(k, v);
            }
        }
        let owned: Vec<RunSummary> = runs.iter().map(|r| (*r).clone()).collect();
        let events: Vec<Combination> = runs
            .iter()
            .flat_map(|r| r.crossover_events.iter())
            .filter_map(|e| combination_indicator(&e.parents, &e.child).ok())
            .collect();
        let apr = avg_pass_rate(&owned);
        let tcc = test_case_coverage(&owned);
        out.push(MethodMetrics {
            method,
            tasks: per_task.len(),
            runs: runs.len(),
            estimator,
            pass_at_k: pass,
            apr,
            tcc,
            delta: tcc - apr,
            crossover_events: events.len(),
            excluded_events: events.iter().filter(|e| **e == Combination::Excluded).count(),
            combination_rate: combination_rate(&events),
            avg_generator_calls: mean(runs.iter().map(|r| r.generator_calls as f64)),
            avg_cost: mean(runs.iter().map(|r| r.estimated_cost)),
            avg_latency_s: mean(runs.iter().map(|r| r.latency_ms as f64 / 1000.0)),
        });
    }
    Ok(out)
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Aligned plain-text table, one row per method, percentages for rates.
pub fn render_table(metrics: &[MethodMetrics]) -> String {
    let ks: BTreeSet<usize> = metrics.iter().flat_map(|m| m.pass_at_k.keys().copied()).collect();
    let mut header: Vec<String> = vec!["Method".into()];
    header.extend(ks.iter().map(|k| format!("pass@{k}")));
    header.extend(
        ["APR", "TCC", "Δ", "Comb.", "Calls", "Avg.Cost", "Avg.RT(s)"]
            .iter()
            .map(|s| s.to_string()),
    );
    let mut rows = vec![header];
    for m in metrics {
        let mut row = vec![m.method.as_str().to_string()];
        row.extend(ks.iter().map(|k| m.pass_at_k.get(k).map(|v| pct(*v)).unwrap_or_else(|| "-".into())));
        row.push(pct(m.apr));
        row.push(pct(m.tcc));
        row.push(pct(m.delta));
        row.push(m.combination_rate.map(pct).unwrap_or_else(|| "-".into()));
        row.push(format!("{:.1}", m.avg_generator_calls));
        row.push(format!("{:.4}", m.avg_cost));
        row.push(format!("{:.2}", m.avg_latency_s));
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                let pad = w - cell.chars().count();
                if c == 0 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

/// Best-fitness traces as CSV: `task_id,run_index,method,step,best_fitness`.
pub fn traces_csv(reports: &[RunReport]) -> String {
    let mut out = String::from("task_id,run_index,method,step,best_fitness\n");
    for r in reports {
        for (step, f) in r.best_fitness_trace.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&r.task_id),
                r.run_index,
                r.method.as_str(),
                step,
                f.as_f64()
            );
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
