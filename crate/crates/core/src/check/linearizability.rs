//! Linearizability of the client history against the key-value store.
//!
//! Keys are independent objects, so the history is split per key and each
//! part is searched separately (linearizability is compositional). The
//! search explores, depth first, the operations that may take effect next:
//! those invoked before every still-unlinearized completed operation
//! returned. Visited (linearized set, state) pairs are memoized. Operations
//! without a response may take effect or not.

use std::collections::{BTreeMap, HashSet};

use super::{TraceIndex, Verdict};
use crate::app::Response;
use crate::types::{Key, Op, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryOp {
    /// Trace positions of the invocation and, when complete, the response.
    pub call: usize,
    pub ret: Option<usize>,
    pub op: Op,
    pub response: Option<Response>,
}

#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Linearizable,
    Violation,
    Exhausted,
}

/// Client history grouped by key, from `Invoke`/`Response` events.
pub fn history(ix: &TraceIndex) -> BTreeMap<Key, Vec<HistoryOp>> {
    let mut by_key: BTreeMap<Key, Vec<HistoryOp>> = BTreeMap::new();
    for (id, inv) in &ix.invokes {
        let resp = ix.responses.get(id);
        by_key.entry(inv.op.key().clone()).or_default().push(HistoryOp {
            call: inv.index,
            ret: resp.map(|r| r.0),
            op: inv.op.clone(),
            response: resp.map(|r| r.2.clone()),
        });
    }
    by_key
}

pub fn check_linearizability(ix: &TraceIndex, budget: u64) -> Verdict {
    let mut remaining = budget;
    for (key, ops) in history(ix) {
        match check_key(&ops, &mut remaining) {
            Outcome::Linearizable => {}
            Outcome::Violation => {
                return Verdict::fail(
                    format!("no linearization for key {key}"),
                    ops.iter().flat_map(|o| std::iter::once(o.call).chain(o.ret)).collect(),
                )
            }
            Outcome::Exhausted => {
                return Verdict::Exhausted { detail: format!("search budget of {budget} states spent at key {key}") }
            }
        }
    }
    Verdict::Pass
}

struct Search<'a> {
    ops: Vec<&'a HistoryOp>,
    memo: HashSet<(Vec<u64>, Option<Value>)>,
    budget: &'a mut u64,
}

/// Searches one key's history; `budget` counts explored states.
pub fn check_key(ops: &[HistoryOp], budget: &mut u64) -> Outcome {
    let mut sorted: Vec<&HistoryOp> = ops.iter().collect();
    sorted.sort_by_key(|o| o.call);
    let words = sorted.len().div_ceil(64).max(1);
    let mut search = Search { ops: sorted, memo: HashSet::new(), budget };
    let mut done = vec![0u64; words];
    match search.explore(&mut done, None) {
        Some(true) => Outcome::Linearizable,
        Some(false) => Outcome::Violation,
        None => Outcome::Exhausted,
    }
}

fn is_set(bits: &[u64], i: usize) -> bool {
    bits[i / 64] & (1 << (i % 64)) != 0
}

fn flip(bits: &mut [u64], i: usize) {
    bits[i / 64] ^= 1 << (i % 64);
}

impl Search<'_> {
    /// `None` when the budget ran out.
    fn explore(&mut self, done: &mut Vec<u64>, state: Option<Value>) -> Option<bool> {
        let pending_completed = self
            .ops
            .iter()
            .enumerate()
            .filter(|(i, o)| !is_set(done, *i) && o.ret.is_some())
            .map(|(_, o)| o.ret.unwrap_or(usize::MAX))
            .min();
        let Some(deadline) = pending_completed else { return Some(true) };
        if self.memo.contains(&(done.clone(), state.clone())) {
            return Some(false);
        }
        if *self.budget == 0 {
            return None;
        }
        *self.budget -= 1;
        for i in 0..self.ops.len() {
            let op = self.ops[i];
            if op.call > deadline {
                break;
            }
            if is_set(done, i) {
                continue;
            }
            let next = match (&op.op, &op.response) {
                // A read that never answered constrains nothing.
                (Op::Get { .. }, None) => continue,
                (Op::Get { .. }, Some(Response::Read(v))) if *v == state => state.clone(),
                (Op::Get { .. }, Some(_)) => continue,
                (Op::Put { value, .. }, None | Some(Response::Ack)) => Some(value.clone()),
                (Op::Put { .. }, Some(_)) => continue,
            };
            flip(done, i);
            let found = self.explore(done, next);
            flip(done, i);
            match found {
                Some(true) => return Some(true),
                None => return None,
                Some(false) => {}
            }
        }
        self.memo.insert((done.clone(), state));
        Some(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn put(call: usize, ret: Option<usize>, v: &str) -> HistoryOp {
        HistoryOp {
            call,
            ret,
            op: Op::Put { key: Key::from("k"), value: Value::from(v) },
            response: ret.map(|_| Response::Ack),
        }
    }

    fn get(call: usize, ret: Option<usize>, v: Option<&str>) -> HistoryOp {
        HistoryOp {
            call,
            ret,
            op: Op::Get { key: Key::from("k") },
            response: ret.map(|_| Response::Read(v.map(Value::from))),
        }
    }

    fn verdict(ops: &[HistoryOp]) -> Outcome {
        check_key(ops, &mut 1_000_000)
    }

    #[test]
    fn sequential_history() {
        let h = [put(0, Some(1), "1"), get(2, Some(3), Some("1")), put(4, Some(5), "2"), get(6, Some(7), Some("2"))];
        assert_eq!(verdict(&h), Outcome::Linearizable);
    }

    #[test]
    fn stale_read_after_completed_write() {
        let h = [put(0, Some(1), "1"), get(2, Some(3), None)];
        assert_eq!(verdict(&h), Outcome::Violation);
    }

    #[test]
    fn concurrent_ops_may_reorder() {
        // Read overlaps the write: either value is fine.
        assert_eq!(verdict(&[put(0, Some(3), "1"), get(1, Some(2), None)]), Outcome::Linearizable);
        assert_eq!(verdict(&[put(0, Some(3), "1"), get(1, Some(2), Some("1"))]), Outcome::Linearizable);
        // Two reads see writes in opposite orders: not linearizable.
        let h = [
            put(0, Some(10), "1"),
            put(1, Some(11), "2"),
            get(2, Some(4), Some("1")),
            get(5, Some(6), Some("2")),
            get(7, Some(8), Some("1")),
        ];
        assert_eq!(verdict(&h), Outcome::Violation);
    }

    #[test]
    fn pending_writes_are_optional() {
        assert_eq!(verdict(&[put(0, None, "1"), get(1, Some(2), Some("1"))]), Outcome::Linearizable);
        assert_eq!(verdict(&[put(0, None, "1"), get(1, Some(2), None)]), Outcome::Linearizable);
        // But a pending write cannot take effect before its invocation.
        assert_eq!(verdict(&[get(0, Some(1), Some("1")), put(2, None, "1")]), Outcome::Violation);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let h: Vec<HistoryOp> = (0..12).map(|i| put(i, Some(100 + i), &i.to_string())).chain([get(200, Some(201), Some("x"))]).collect();
        assert_eq!(check_key(&h, &mut 10), Outcome::Exhausted);
        assert_eq!(check_key(&h, &mut 100_000_000), Outcome::Violation);
    }
}
