//! Task-completion evaluation, annotator agreement and multi-run
//! comparison tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvError, InstanceDescriptor};
use crate::pipeline::RunReport;
use crate::policy::{rollout, Policy};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("empty instance pool")]
    EmptyPool,
    #[error("no seeds given")]
    NoSeeds,
    #[error("label sets cover different steps ({0} vs {1})")]
    Universe(usize, usize),
    #[error("no reports to summarize")]
    NoReports,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub instance_id: String,
    pub seed: u64,
    pub success: bool,
    pub steps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub rate: f64,
    /// (seed, rate over the pool)
    pub per_seed: Vec<(u64, f64)>,
    pub results: Vec<CompletionResult>,
}

/// One episode per (instance, seed); the rate is successes / episodes.
pub fn task_completion(
    policy: &dyn Policy,
    pool: &[InstanceDescriptor],
    seeds: &[u64],
) -> Result<Completion, EvalError> {
    if pool.is_empty() {
        return Err(EvalError::EmptyPool);
    }
    if seeds.is_empty() {
        return Err(EvalError::NoSeeds);
    }
    let jobs: Vec<(u64, &InstanceDescriptor)> = seeds
        .iter()
        .flat_map(|&s| pool.iter().map(move |d| (s, d)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|(seed, d)| {
            let t = rollout(policy, d, *seed, "eval")?;
            Ok(CompletionResult {
                instance_id: d.id.clone(),
                seed: *seed,
                success: t.success,
                steps: t.len() as u32,
            })
        })
        .collect::<Result<Vec<_>, EnvError>>()?;
    let rate_of =
        |rs: &[&CompletionResult]| rs.iter().filter(|r| r.success).count() as f64 / rs.len() as f64;
    let per_seed = seeds
        .iter()
        .map(|&s| {
            let rs: Vec<&CompletionResult> = results.iter().filter(|r| r.seed == s).collect();
            (s, rate_of(&rs))
        })
        .collect();
    let all: Vec<&CompletionResult> = results.iter().collect();
    Ok(Completion {
        rate: rate_of(&all),
        per_seed,
        results,
    })
}

/// Overlap of two annotators' positive labels over a shared step set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub a_only: usize,
    pub b_only: usize,
    pub both: usize,
    /// Steps labelled positive by either annotator.
    pub total: usize,
    pub pct_a_only: f64,
    pub pct_b_only: f64,
    pub pct_both: f64,
}

/// Labels are per step over the same step universe.
pub fn agreement_matrix(a: &[bool], b: &[bool]) -> Result<AgreementMatrix, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Universe(a.len(), b.len()));
    }
    let (mut a_only, mut b_only, mut both) = (0, 0, 0);
    for (&x, &y) in a.iter().zip(b) {
        match (x, y) {
            (true, true) => both += 1,
            (true, false) => a_only += 1,
            (false, true) => b_only += 1,
            _ => {}
        }
    }
    let total = a_only + b_only + both;
    let pct = |n: usize| {
        if total == 0 {
            0.0
        } else {
            100.0 * n as f64 / total as f64
        }
    };
    Ok(AgreementMatrix {
        a_only,
        b_only,
        both,
        total,
        pct_a_only: pct(a_only),
        pct_b_only: pct(b_only),
        pct_both: pct(both),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub runs: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// (seed, final test completion)
    pub per_seed: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinCount {
    pub method: String,
    pub over: String,
    /// Seeds where `method` strictly beats `over`.
    pub wins: usize,
    /// Seeds both methods were run with.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub wins: Vec<WinCount>,
}

impl Summary {
    /// Aligned text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let _ = writeln!(
            out,
            "{:<w$}  {:>4}  {:>6}  {:>6}  {:>6}",
            "method", "runs", "mean", "min", "max"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<w$}  {:>4}  {:>6.3}  {:>6.3}  {:>6.3}",
                r.method, r.runs, r.mean, r.min, r.max
            );
        }
        if !self.wins.is_empty() {
            out.push('\n');
            for c in &self.wins {
                let _ = writeln!(out, "{} beats {}: {}/{}", c.method, c.over, c.wins, c.seeds);
            }
        }
        out
    }
}

/// Group reports by method (rows in lexicographic method order) and count
/// per-seed wins between every ordered pair of methods.
pub fn summarize_runs(reports: &[RunReport]) -> Result<Summary, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    let mut by_method: BTreeMap<String, BTreeMap<u64, f64>> = BTreeMap::new();
    for r in reports {
        by_method
            .entry(r.method_label())
            .or_default()
            .insert(r.seed, r.final_test_completion());
    }
    let rows = by_method
        .iter()
        .map(|(m, seeds)| {
            let vals: Vec<f64> = seeds.values().cloned().collect();
            SummaryRow {
                method: m.clone(),
                runs: vals.len(),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                min: vals.iter().cloned().fold(f64::INFINITY, f64::min),
                max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                per_seed: seeds.iter().map(|(s, v)| (*s, *v)).collect(),
            }
        })
        .collect();
    let mut wins = Vec::new();
    for (a, sa) in &by_method {
        for (b, sb) in &by_method {
            if a == b {
                continue;
            }
            let common: BTreeSet<&u64> = sa.keys().filter(|s| sb.contains_key(s)).collect();
            wins.push(WinCount {
                method: a.clone(),
                over: b.clone(),
                wins: common.iter().filter(|s| sa[**s] > sb[**s]).count(),
                seeds: common.len(),
            });
        }
    }
    Ok(Summary { rows, wins })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_positive_sets() {
        let mut a = vec![false; 20];
        let mut b = vec![false; 20];
        for x in a.iter_mut().take(3) {
            *x = true;
        }
        for y in b.iter_mut().skip(10).take(7) {
            *y = true;
        }
        let m = agreement_matrix(&a, &b).unwrap();
        assert_eq!((m.a_only, m.b_only, m.both, m.total), (3, 7, 0, 10));
        assert!((m.pct_a_only - 30.0).abs() < 1e-9);
        assert!((m.pct_b_only - 70.0).abs() < 1e-9);
        let same = agreement_matrix(&a, &a).unwrap();
        assert_eq!(same.pct_both, 100.0);
        assert!(agreement_matrix(&a, &b[..5]).is_err());
    }
}
