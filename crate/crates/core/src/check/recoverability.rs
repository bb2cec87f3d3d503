use itertools::Itertools;

use super::{TraceIndex, Verdict};
use crate::protocol::{fast_path_condition, matching_replies, threshold_union, union_deps};
use crate::types::DepSet;

/// Every `floor(n/2)` fast-quorum members other than the coordinator
/// reported, together, exactly the committed dependencies of a fast-path
/// commit. This is what lets recovery rebuild the decision by union.
pub fn check_fast_path_recoverability(ix: &TraceIndex) -> Verdict {
    let k = (ix.config.n / 2) as usize;
    for d in ix.decisions.iter().filter(|d| d.fast && !d.read_optimized) {
        let members: Vec<&DepSet> = d.acks.iter().filter(|(p, _)| **p != d.proc).map(|(_, s)| s).collect();
        if members.len() < k {
            return Verdict::fail(format!("{} fast quorum too small to recover", d.dot), vec![d.index]);
        }
        for subset in (0..members.len()).combinations(k) {
            let u = union_deps(subset.iter().map(|&i| members[i]));
            if &u != d.union {
                return Verdict::fail(
                    format!("{} cannot be recovered from members {:?}", d.dot, subset),
                    vec![d.index],
                );
            }
        }
    }
    Verdict::Pass
}

/// The recorded fast/slow decisions follow from the recorded acks: the
/// threshold condition, the matching predicate (which implies it), quorum
/// sizes, and slow-path proposals (pruned ones are subsets of the union).
pub fn check_decisions(ix: &TraceIndex) -> Verdict {
    let (n, f) = (ix.config.n, ix.config.f as usize);
    let pruning = ix.config.protocol.slow_path_pruning;
    for d in &ix.decisions {
        let fail = |what: &str| Verdict::fail(format!("{}: {what}", d.dot), vec![d.index]);
        let expected_size = if d.read_optimized { n / 2 + 1 } else { n / 2 + ix.config.f };
        if d.acks.len() != expected_size as usize || !d.acks.contains_key(&d.proc) {
            return fail("wrong fast quorum");
        }
        if &union_deps(d.acks.values()) != d.union {
            return fail("union does not match the acks");
        }
        if matching_replies(d.acks) != d.matching {
            return fail("matching predicate misreported");
        }
        if d.read_optimized && !(ix.config.protocol.nfr_reads && d.fast) {
            return fail("read optimization misreported");
        }
        let condition = fast_path_condition(d.acks, f);
        if !d.read_optimized && condition != d.fast {
            return fail("fast-path condition misreported");
        }
        if d.matching && !condition {
            return fail("matching replies but the threshold condition fails");
        }
        match (d.fast, d.proposal) {
            (true, None) => {}
            (false, Some(p)) => {
                if !p.is_subset(d.union) {
                    return fail("slow-path proposal is not within the union");
                }
                let expected = if pruning { threshold_union(d.acks.values(), f) } else { d.union.clone() };
                if p != &expected {
                    return fail("slow-path proposal differs from the rule");
                }
            }
            _ => return fail("proposal present iff slow path"),
        }
    }
    Verdict::Pass
}
