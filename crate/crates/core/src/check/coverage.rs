use std::collections::BTreeMap;

use super::{TraceIndex, Verdict};
use crate::types::{conflict, Key};

/// Two committed conflicting commands: at least one lists the other as a
/// dependency. Reads committed outside the dependency graph are exempt.
pub fn check_conflict_coverage(ix: &TraceIndex) -> Verdict {
    let mut by_key: BTreeMap<&Key, Vec<_>> = BTreeMap::new();
    for (dot, c) in ix.decided() {
        if ix.is_unordered_read(c.cmd) {
            continue;
        }
        if let Some(key) = c.cmd.key() {
            by_key.entry(key).or_default().push((dot, c));
        }
    }
    for group in by_key.values() {
        for (i, (a, ca)) in group.iter().enumerate() {
            for (b, cb) in &group[i + 1..] {
                if conflict(ca.cmd, cb.cmd, ix.mode()) && !ca.deps.contains(b) && !cb.deps.contains(a) {
                    return Verdict::fail(
                        format!("conflicting {a} and {b} are not ordered by dependencies"),
                        vec![ca.index, cb.index],
                    );
                }
            }
        }
    }
    Verdict::Pass
}
