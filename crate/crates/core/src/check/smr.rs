//! Validity, Integrity, Ordering, and the batch invariants.

use std::collections::{BTreeMap, BTreeSet};

use super::{TraceIndex, Verdict};
use crate::sim::trace::{Event, Trace};
use crate::types::{Command, CommandId, Dot, Key, ProcessId};

/// Timestamps never go back, and every delivery matches one earlier send
/// at least one base delay before.
pub fn check_wellformed(trace: &Trace) -> Verdict {
    let latency = trace.config().map(|c| c.latency.matrix(c.n));
    let mut last = 0;
    let mut sends: BTreeMap<u64, (usize, u64, ProcessId, ProcessId)> = BTreeMap::new();
    let mut delivered = BTreeSet::new();
    for (index, t, event) in trace.events() {
        if t < last {
            return Verdict::fail("timestamp went backwards", vec![index - 1, index]);
        }
        last = t;
        match event {
            Event::Send { id, from, to, .. } => {
                sends.insert(*id, (index, t, *from, *to));
            }
            Event::Deliver { id, from, to } => {
                let Some(&(si, st, sf, sto)) = sends.get(id) else {
                    return Verdict::fail(format!("delivery of unknown message {id}"), vec![index]);
                };
                if (sf, sto) != (*from, *to) || !delivered.insert(*id) {
                    return Verdict::fail(format!("delivery {id} does not match its send"), vec![si, index]);
                }
                let base = latency.as_ref().and_then(|m| m.get(from.index())?.get(to.index()).copied()).unwrap_or(0);
                if t < st + base {
                    return Verdict::fail(format!("message {id} arrived early"), vec![si, index]);
                }
            }
            _ => {}
        }
    }
    Verdict::Pass
}

/// Every executed command was invoked, under the dot it was executed with.
pub fn check_validity(ix: &TraceIndex) -> Verdict {
    for (proc, execs) in &ix.executions {
        for e in execs.iter().filter(|e| !e.noop) {
            let Some(commit) = ix.committed_at(*proc, &e.dot) else {
                return Verdict::fail(format!("{} executed {} without committing it", proc, e.dot), vec![e.index]);
            };
            let Command::App(app) = commit.cmd else {
                return Verdict::fail(format!("{} executed a noop as a command", e.dot), vec![e.index]);
            };
            match ix.invokes.get(&app.id) {
                Some(inv) if inv.dot == e.dot && inv.op == &app.op => {}
                Some(inv) => {
                    return Verdict::fail(
                        format!("{} executed {} differently from its invocation", proc, app.id),
                        vec![inv.index, e.index],
                    )
                }
                None => return Verdict::fail(format!("{} was never invoked", app.id), vec![commit.index, e.index]),
            }
        }
    }
    Verdict::Pass
}

/// No process executes a dot or a command twice.
pub fn check_integrity(ix: &TraceIndex) -> Verdict {
    for (proc, execs) in &ix.executions {
        let mut dots: BTreeMap<Dot, usize> = BTreeMap::new();
        let mut ids: BTreeMap<CommandId, usize> = BTreeMap::new();
        for e in execs {
            if let Some(prev) = dots.insert(e.dot, e.index) {
                return Verdict::fail(format!("{} executed {} twice", proc, e.dot), vec![prev, e.index]);
            }
            if e.noop {
                continue;
            }
            if let Some(id) = ix.committed_at(*proc, &e.dot).and_then(|c| c.cmd.id()) {
                if let Some(prev) = ids.insert(id, e.index) {
                    return Verdict::fail(format!("{} executed {} twice", proc, id), vec![prev, e.index]);
                }
            }
        }
    }
    Verdict::Pass
}

/// Every dependency of an executed dot ran in an earlier or the same batch.
pub fn check_batch_deps(ix: &TraceIndex) -> Verdict {
    for (proc, execs) in &ix.executions {
        let batch_of: BTreeMap<Dot, (usize, usize)> = execs.iter().map(|e| (e.dot, (e.batch, e.index))).collect();
        for e in execs {
            let Some(commit) = ix.committed_at(*proc, &e.dot) else {
                return Verdict::fail(format!("{} executed {} without committing it", proc, e.dot), vec![e.index]);
            };
            for dep in commit.deps {
                match batch_of.get(dep) {
                    Some(&(b, _)) if b <= e.batch => {}
                    Some(&(_, later)) => {
                        return Verdict::fail(
                            format!("{} ran {} before its dependency {}", proc, e.dot, dep),
                            vec![e.index, later],
                        )
                    }
                    None => {
                        return Verdict::fail(
                            format!("{} ran {} but never its dependency {}", proc, e.dot, dep),
                            vec![commit.index, e.index],
                        )
                    }
                }
            }
        }
    }
    Verdict::Pass
}

/// Each dot is executed in the same batch everywhere.
pub fn check_batch_agreement(ix: &TraceIndex) -> Verdict {
    let mut seen: BTreeMap<Dot, (BTreeSet<Dot>, usize)> = BTreeMap::new();
    for execs in ix.executions.values() {
        let mut batches: BTreeMap<usize, BTreeSet<Dot>> = BTreeMap::new();
        for e in execs {
            batches.entry(e.batch).or_default().insert(e.dot);
        }
        for e in execs {
            let batch = &batches[&e.batch];
            match seen.get(&e.dot) {
                Some((other, index)) if other != batch => {
                    return Verdict::fail(format!("{} executed in different batches", e.dot), vec![*index, e.index])
                }
                Some(_) => {}
                None => {
                    seen.insert(e.dot, (batch.clone(), e.index));
                }
            }
        }
    }
    Verdict::Pass
}

/// The union of per-process conflict orders and real-time precedence is
/// acyclic.
pub fn check_ordering(ix: &TraceIndex) -> Verdict {
    // Nodes: ordered executed commands.
    let mut nodes: Vec<CommandId> = Vec::new();
    let mut node_of: BTreeMap<CommandId, usize> = BTreeMap::new();
    let mut first_exec: BTreeMap<usize, usize> = BTreeMap::new();
    let mut per_proc: Vec<Vec<(usize, &Key, bool)>> = Vec::new();
    for (proc, execs) in &ix.executions {
        let mut order = Vec::new();
        for e in execs.iter().filter(|e| !e.noop) {
            let Some(commit) = ix.committed_at(*proc, &e.dot) else { continue };
            let Command::App(app) = commit.cmd else { continue };
            if ix.is_unordered_read(commit.cmd) {
                continue;
            }
            let v = *node_of.entry(app.id).or_insert_with(|| {
                nodes.push(app.id);
                nodes.len() - 1
            });
            let first = first_exec.entry(v).or_insert(e.index);
            *first = (*first).min(e.index);
            let write = app.op.is_write() || ix.mode() == crate::types::ConflictMode::Coarse;
            order.push((v, app.op.key(), write));
        }
        per_proc.push(order);
    }

    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for order in &per_proc {
        // Reduced per-key order: last write precedes everything after it;
        // reads since the last write precede the next write.
        let mut last_write: BTreeMap<&Key, usize> = BTreeMap::new();
        let mut reads: BTreeMap<&Key, Vec<usize>> = BTreeMap::new();
        for &(v, key, write) in order {
            if let Some(&w) = last_write.get(key) {
                edges.insert((w, v));
            }
            if write {
                for r in reads.remove(key).unwrap_or_default() {
                    edges.insert((r, v));
                }
                last_write.insert(key, v);
            } else {
                reads.entry(key).or_default().push(v);
            }
        }
    }

    // Real time: a chain of invocation nodes, so that c reaches d exactly
    // when c executed somewhere before d was invoked.
    let mut invokes: Vec<(usize, Option<usize>)> = ix
        .invokes
        .iter()
        .map(|(id, inv)| (inv.index, node_of.get(id).copied()))
        .collect();
    invokes.sort();
    let base = nodes.len();
    let total = base + invokes.len();
    for (k, (_, v)) in invokes.iter().enumerate() {
        if k + 1 < invokes.len() {
            edges.insert((base + k, base + k + 1));
        }
        if let Some(v) = v {
            edges.insert((base + k, *v));
        }
    }
    for (&v, &e) in &first_exec {
        let k = invokes.partition_point(|(i, _)| *i < e);
        if k < invokes.len() {
            edges.insert((v, base + k));
        }
    }

    let mut adj = vec![Vec::new(); total];
    for (a, b) in edges {
        adj[a].push(b);
    }
    match find_cycle(&adj) {
        None => Verdict::Pass,
        Some(cycle) => {
            let ids: Vec<CommandId> = cycle.iter().filter(|&&v| v < base).map(|&v| nodes[v]).collect();
            let witness = ids.iter().map(|id| ix.invokes.get(id).map_or(0, |i| i.index)).collect();
            let names: Vec<String> = ids.iter().map(ToString::to_string).collect();
            Verdict::fail(format!("ordering cycle through {}", names.join(" -> ")), witness)
        }
    }
}

/// Iterative three-colour DFS; returns the nodes of one cycle.
pub fn find_cycle(adj: &[Vec<usize>]) -> Option<Vec<usize>> {
    const WHITE: u8 = 0;
    const GREY: u8 = 1;
    const BLACK: u8 = 2;
    let mut colour = vec![WHITE; adj.len()];
    let mut parent = vec![usize::MAX; adj.len()];
    for root in 0..adj.len() {
        if colour[root] != WHITE {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        colour[root] = GREY;
        while let Some(&mut (v, ref mut pos)) = stack.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                match colour[w] {
                    WHITE => {
                        colour[w] = GREY;
                        parent[w] = v;
                        stack.push((w, 0));
                    }
                    GREY => {
                        let mut cycle = vec![w];
                        let mut x = v;
                        while x != w {
                            cycle.push(x);
                            x = parent[x];
                        }
                        cycle.reverse();
                        cycle.rotate_right(1);
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                colour[v] = BLACK;
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_detection() {
        assert_eq!(find_cycle(&[vec![1], vec![2], vec![]]), None);
        let c = find_cycle(&[vec![1], vec![2], vec![0]]).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(find_cycle(&[vec![0]]), Some(vec![0]));
        let c = find_cycle(&[vec![1, 2], vec![3], vec![3], vec![1]]).unwrap();
        let set: BTreeSet<_> = c.into_iter().collect();
        assert_eq!(set, [1, 3].into_iter().collect());
    }
}
