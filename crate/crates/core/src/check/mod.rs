//! Offline trace checkers.
//!
//! Each checker is a pure function of a [`Trace`] returning a [`Verdict`].
//! Failures cite the trace line indices (0-based) of the offending events.

pub mod agreement;
pub mod coverage;
pub mod index;
pub mod linearizability;
pub mod liveness;
pub mod recoverability;
pub mod smr;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::trace::Trace;
pub use index::TraceIndex;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { detail: String, witness: Vec<usize> },
    /// The search gave up before finding a witness or a violation.
    Exhausted { detail: String },
    Skipped { reason: String },
}

impl Verdict {
    pub fn fail(detail: impl Into<String>, witness: Vec<usize>) -> Self {
        Verdict::Fail { detail: detail.into(), witness }
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass | Verdict::Skipped { .. })
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: BTreeMap<String, Verdict>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.values().all(Verdict::is_pass)
    }

    pub fn get(&self, name: &str) -> Option<&Verdict> {
        self.checks.get(name)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&String, &Verdict)> {
        self.checks.iter().filter(|(_, v)| !v.is_pass())
    }
}

pub const LINEARIZABILITY_BUDGET: u64 = 2_000_000;

/// Runs every checker.
pub fn check_all(trace: &Trace) -> CheckReport {
    let ix = TraceIndex::new(trace);
    let mut checks = BTreeMap::new();
    checks.insert("trace_wellformed".into(), smr::check_wellformed(trace));
    checks.insert("agreement".into(), agreement::check_agreement(&ix));
    checks.insert("conflict_coverage".into(), coverage::check_conflict_coverage(&ix));
    checks.insert("validity".into(), smr::check_validity(&ix));
    checks.insert("integrity".into(), smr::check_integrity(&ix));
    checks.insert("ordering".into(), smr::check_ordering(&ix));
    checks.insert("batch_deps".into(), smr::check_batch_deps(&ix));
    checks.insert("batch_agreement".into(), smr::check_batch_agreement(&ix));
    checks.insert(
        "linearizability".into(),
        linearizability::check_linearizability(&ix, LINEARIZABILITY_BUDGET),
    );
    checks.insert(
        "fast_path_recoverability".into(),
        recoverability::check_fast_path_recoverability(&ix),
    );
    checks.insert("decision_consistency".into(), recoverability::check_decisions(&ix));
    checks.insert("liveness".into(), liveness::check_liveness(trace, &ix));
    CheckReport { checks }
}
