use super::{TraceIndex, Verdict};

/// Every commit of a dot, local or sent, carries the same command and
/// dependencies.
pub fn check_agreement(ix: &TraceIndex) -> Verdict {
    for (dot, commits) in &ix.commits {
        let first = &commits[0];
        for c in &commits[1..] {
            if (c.cmd, c.deps) != (first.cmd, first.deps) {
                return Verdict::fail(format!("{dot} committed with different values"), vec![first.index, c.index]);
            }
        }
        for (index, cmd, deps) in ix.sent_commits.get(dot).into_iter().flatten() {
            if (*cmd, *deps) != (first.cmd, first.deps) {
                return Verdict::fail(format!("{dot} MCommit disagrees with a local commit"), vec![first.index, *index]);
            }
        }
    }
    for (dot, sent) in &ix.sent_commits {
        let (i0, c0, d0) = sent[0];
        for (index, cmd, deps) in &sent[1..] {
            if (*cmd, *deps) != (c0, d0) {
                return Verdict::fail(format!("{dot} MCommit payloads differ"), vec![i0, *index]);
            }
        }
    }
    Verdict::Pass
}
