use std::collections::{BTreeMap, BTreeSet};

use super::{TraceIndex, Verdict};
use crate::sim::trace::Trace;
use crate::types::Dot;

/// With at most `f` crashes, every invoked or committed dot is executed at
/// every process that is still alive when the trace ends.
pub fn check_liveness(trace: &Trace, ix: &TraceIndex) -> Verdict {
    if ix.crashed.len() > ix.config.f as usize {
        return Verdict::Skipped { reason: format!("{} crashes exceed f = {}", ix.crashed.len(), ix.config.f) };
    }
    let mut wanted: BTreeMap<Dot, usize> = ix.invokes.values().map(|i| (i.dot, i.index)).collect();
    for (dot, commits) in &ix.commits {
        wanted.entry(*dot).or_insert(commits[0].index);
    }
    for p in ix.alive() {
        let done: BTreeSet<Dot> = ix.executions.get(&p).into_iter().flatten().map(|e| e.dot).collect();
        if let Some((dot, index)) = wanted.iter().find(|(d, _)| !done.contains(d)) {
            let end = trace.lines.len().saturating_sub(1);
            return Verdict::fail(format!("{p} never executed {dot}"), vec![*index, end]);
        }
    }
    Verdict::Pass
}
