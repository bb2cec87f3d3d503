//! Run statistics derived from a trace.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::check::{CheckReport, TraceIndex};
use crate::protocol::CommitPath;
use crate::sim::trace::{Event, RunOutcome, Trace};
use crate::sim::SimConfig;
use crate::types::Dot;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean: f64,
    pub p50: u64,
    pub p95: u64,
    pub p99: u64,
    pub max: u64,
    /// Latency in virtual ms to number of commands.
    pub histogram: BTreeMap<u64, usize>,
}

impl LatencyStats {
    pub fn from_samples(mut samples: Vec<u64>) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        let pct = |p: f64| samples[((samples.len() - 1) as f64 * p).round() as usize];
        let mut histogram = BTreeMap::new();
        for &s in &samples {
            *histogram.entry(s).or_insert(0) += 1;
        }
        LatencyStats {
            count: samples.len(),
            mean: samples.iter().sum::<u64>() as f64 / samples.len() as f64,
            p50: pct(0.5),
            p95: pct(0.95),
            p99: pct(0.99),
            max: *samples.last().unwrap_or(&0),
            histogram,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// The configuration with every default filled in.
    pub config: SimConfig,
    pub outcome: RunOutcome,
    pub commands_submitted: usize,
    pub commands_committed: usize,
    pub commands_executed: usize,
    pub fast_path_commits: usize,
    pub slow_path_commits: usize,
    pub recovered_commits: usize,
    pub read_optimized_commits: usize,
    /// Fast-path commits over commits that were not read-optimized.
    pub fast_path_ratio: f64,
    /// Share of the same commits whose fast-quorum replies were all equal.
    pub matching_ratio: f64,
    /// Invocation to commit at the coordinator, virtual ms.
    pub commit_latency: LatencyStats,
    /// Mean commit latency divided by the mean off-diagonal base delay.
    pub mean_commit_latency_delays: f64,
    pub recovery_count: usize,
    pub checks: CheckReport,
}

impl RunSummary {
    pub fn new(trace: &Trace, checks: CheckReport) -> Self {
        let ix = TraceIndex::new(trace);
        let config = ix.config.clone();

        let read_optimized: BTreeSet<Dot> =
            ix.decisions.iter().filter(|d| d.read_optimized).map(|d| d.dot).collect();
        let mut first_path: BTreeMap<Dot, CommitPath> = BTreeMap::new();
        for d in &ix.decides {
            first_path.entry(d.dot).or_insert(d.path);
        }
        let mut paths = BTreeMap::new();
        for (dot, path) in &first_path {
            if !read_optimized.contains(dot) {
                *paths.entry(*path).or_insert(0usize) += 1;
            }
        }
        let count = |p| paths.get(&p).copied().unwrap_or(0);
        let (fast, slow, recovered) = (count(CommitPath::Fast), count(CommitPath::Slow), count(CommitPath::Recovered));
        let denominator = fast + slow + recovered;
        let matching = ix
            .decisions
            .iter()
            .filter(|d| !d.read_optimized && d.matching && first_path.contains_key(&d.dot))
            .count();
        let ratio = |x: usize| if denominator == 0 { 1.0 } else { x as f64 / denominator as f64 };

        let invoked: BTreeSet<Dot> = ix.invokes.values().map(|i| i.dot).collect();
        let executed: BTreeSet<Dot> = ix.executions.values().flatten().map(|e| e.dot).collect();
        let mut commit_time: BTreeMap<Dot, u64> = BTreeMap::new();
        for (_, t, event) in trace.events() {
            if let Event::Commit { proc, dot, .. } = event {
                if *proc == dot.proc {
                    commit_time.entry(*dot).or_insert(t);
                }
            }
        }
        let samples: Vec<u64> = ix
            .invokes
            .values()
            .filter_map(|inv| commit_time.get(&inv.dot).map(|t| t - inv.t))
            .collect();
        let commit_latency = LatencyStats::from_samples(samples);
        let matrix = config.latency.matrix(config.n);
        let off: Vec<u64> = matrix
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().filter(move |(j, _)| *j != i).map(|(_, d)| *d))
            .collect();
        let unit = off.iter().sum::<u64>() as f64 / off.len().max(1) as f64;

        RunSummary {
            outcome: trace.outcome().unwrap_or(RunOutcome::HorizonReached),
            commands_submitted: ix.invokes.len(),
            commands_committed: invoked.iter().filter(|d| ix.commits.contains_key(d)).count(),
            commands_executed: invoked.iter().filter(|d| executed.contains(d)).count(),
            fast_path_commits: fast,
            slow_path_commits: slow,
            recovered_commits: recovered,
            read_optimized_commits: read_optimized.len(),
            fast_path_ratio: ratio(fast),
            matching_ratio: ratio(matching),
            mean_commit_latency_delays: if unit > 0.0 { commit_latency.mean / unit } else { 0.0 },
            commit_latency,
            recovery_count: trace.events().filter(|(_, _, e)| matches!(e, Event::RecoveryStart { .. })).count(),
            checks,
            config,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let s = LatencyStats::from_samples(vec![4, 2, 2, 10]);
        assert_eq!(s.count, 4);
        assert_eq!(s.mean, 4.5);
        assert_eq!(s.max, 10);
        assert_eq!(s.histogram[&2], 2);
        assert_eq!(LatencyStats::from_samples(vec![]).count, 0);
    }
}
