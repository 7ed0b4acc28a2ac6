//! Learning-curve statistics over iteration records: prefix means,
//! per-round summaries and 95% normal-approximation confidence bands.

use crate::env::IterationRecord;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

pub const SUMMARY_HEADER: &str = "round,mean_reward,accuracy,gap_baseline,gap_oracle";
pub const SERIES_HEADER: &str = "iter,running_reward,running_accuracy";
const Z_95: f64 = 1.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("round has no records")]
    EmptyRound,
    #[error("records mix rounds {0} and {1}")]
    MixedRounds(u32, u32),
}

/// `(k, mean of first k values)` for k = 1..=n.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunningSeries {
    pub points: Vec<(u64, f64)>,
}

impl RunningSeries {
    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    /// Value after `k` observations.
    pub fn at(&self, k: u64) -> Option<f64> {
        k.checked_sub(1)
            .and_then(|i| self.points.get(i as usize))
            .map(|p| p.1)
    }
}

pub fn running_mean(values: impl IntoIterator<Item = f64>) -> RunningSeries {
    let mut m = 0.0;
    let points = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let k = (i + 1) as u64;
            m += (v - m) / k as f64;
            (k, m)
        })
        .collect();
    RunningSeries { points }
}

pub fn running_reward(records: &[IterationRecord]) -> RunningSeries {
    running_mean(records.iter().map(|r| r.reward as f64))
}

pub fn running_accuracy(records: &[IterationRecord]) -> RunningSeries {
    running_mean(records.iter().map(|r| if r.accurate { 1.0 } else { 0.0 }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundSummary {
    pub round: u32,
    pub mean_reward: f64,
    pub accuracy: f64,
    /// Mean of `denoise_pr - baseline_pr`.
    pub mean_gap_baseline: f64,
    /// Mean of `denoise_pr - oracle_pr`.
    pub mean_gap_oracle: f64,
    pub mean_denoise_pr: f64,
}

pub fn summarize_round(records: &[IterationRecord]) -> Result<RoundSummary, MetricsError> {
    let first = records.first().ok_or(MetricsError::EmptyRound)?;
    if let Some(r) = records.iter().find(|r| r.round != first.round) {
        return Err(MetricsError::MixedRounds(first.round, r.round));
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&IterationRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    Ok(RoundSummary {
        round: first.round,
        mean_reward: mean(&|r| r.reward as f64),
        accuracy: mean(&|r| if r.accurate { 1.0 } else { 0.0 }),
        mean_gap_baseline: mean(&|r| r.denoise_pr - r.baseline_pr),
        mean_gap_oracle: mean(&|r| r.denoise_pr - r.oracle_pr),
        mean_denoise_pr: mean(&|r| r.denoise_pr),
    })
}

/// Groups records by round (ascending) and summarizes each.
pub fn summarize_rounds(records: &[IterationRecord]) -> Vec<RoundSummary> {
    let mut by_round: BTreeMap<u32, Vec<IterationRecord>> = BTreeMap::new();
    for r in records {
        by_round.entry(r.round).or_default().push(r.clone());
    }
    by_round
        .values()
        .map(|rs| summarize_round(rs).expect("grouped rounds are non-empty"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiBand {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

/// Mean and `1.96 * s / sqrt(n)` with the sample standard deviation `s`.
///
/// Uses the normal quantile regardless of `n`; bands for very few samples
/// are narrower than a Student-t band would be.
pub fn ci_across_rounds(values: &[f64]) -> CiBand {
    let n = values.len();
    if n == 0 {
        return CiBand {
            mean: f64::NAN,
            half_width: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let half_width = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Z_95 * var.sqrt() / (n as f64).sqrt()
    };
    CiBand {
        mean,
        half_width,
        n,
    }
}

fn ci_cell(b: &CiBand) -> String {
    format!("{:.6}+/-{:.6}", b.mean, b.half_width)
}

/// Summary CSV: one row per round, then a `ci95` row whose cells read
/// `<mean>+/-<half_width>` across rounds. Empty input yields the header only.
pub fn export_summary(records: &[IterationRecord]) -> String {
    let rounds = summarize_rounds(records);
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in &rounds {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            s.round, s.mean_reward, s.accuracy, s.mean_gap_baseline, s.mean_gap_oracle
        );
    }
    if !rounds.is_empty() {
        let col = |f: fn(&RoundSummary) -> f64| {
            ci_cell(&ci_across_rounds(&rounds.iter().map(f).collect::<Vec<_>>()))
        };
        let _ = writeln!(
            out,
            "ci95,{},{},{},{}",
            col(|s| s.mean_reward),
            col(|s| s.accuracy),
            col(|s| s.mean_gap_baseline),
            col(|s| s.mean_gap_oracle)
        );
    }
    out
}

/// Per-iteration running reward and running accuracy.
pub fn export_series(records: &[IterationRecord]) -> String {
    let reward = running_reward(records);
    let acc = running_accuracy(records);
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for (r, (rw, ac)) in records.iter().zip(reward.points.iter().zip(&acc.points)) {
        let _ = writeln!(out, "{},{:.6},{:.6}", r.iter, rw.1, ac.1);
    }
    out
}

/// Side-by-side running series of several runs keyed by iteration; a run
/// that ended early leaves its cells empty.
pub fn export_comparison(runs: &[(&str, &[IterationRecord])]) -> String {
    let mut out = String::from("iter");
    for (label, _) in runs {
        let _ = write!(out, ",{label}_running_reward,{label}_running_accuracy");
    }
    out.push('\n');
    let series: Vec<_> = runs
        .iter()
        .map(|(_, rs)| (running_reward(rs), running_accuracy(rs)))
        .collect();
    let len = runs.iter().map(|(_, rs)| rs.len()).max().unwrap_or(0);
    for k in 1..=len as u64 {
        let _ = write!(out, "{k}");
        for (rw, ac) in &series {
            match (rw.at(k), ac.at(k)) {
                (Some(a), Some(b)) => {
                    let _ = write!(out, ",{a:.6},{b:.6}");
                }
                _ => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

/// Per-iteration mean and 95% band of the running series across runs
/// (e.g. re-seeded repetitions).
pub fn export_run_ci(runs: &[&[IterationRecord]]) -> String {
    let mut out = String::from(
        "iter,running_reward_mean,running_reward_half_width,running_accuracy_mean,running_accuracy_half_width\n",
    );
    let series: Vec<_> = runs
        .iter()
        .map(|rs| (running_reward(rs), running_accuracy(rs)))
        .collect();
    let len = runs.iter().map(|rs| rs.len()).min().unwrap_or(0);
    for k in 1..=len as u64 {
        let rw: Vec<f64> = series.iter().filter_map(|s| s.0.at(k)).collect();
        let ac: Vec<f64> = series.iter().filter_map(|s| s.1.at(k)).collect();
        let (r, a) = (ci_across_rounds(&rw), ci_across_rounds(&ac));
        let _ = writeln!(
            out,
            "{k},{:.6},{:.6},{:.6},{:.6}",
            r.mean, r.half_width, a.mean, a.half_width
        );
    }
    out
}
