//! Turns committed `(dot, cmd, deps)` triples into an execution order.
//!
//! Committed-but-unexecuted identifiers form a digraph with an edge from each
//! identifier to each of its dependencies that has not executed yet. Its
//! strongly connected components are the smallest sets closed under
//! dependencies. A component runs once nothing it reaches is still
//! uncommitted; components are emitted sinks first, one batch each, with
//! members in dot order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::ExecutorError;
use crate::types::{Command, DepSet, Dot};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub batch: usize,
    pub dot: Dot,
    pub cmd: Command,
}

#[derive(Clone, Debug, Default)]
pub struct ExecGraph {
    committed: BTreeMap<Dot, (Command, DepSet)>,
    executed: BTreeSet<Dot>,
    log: Vec<LogEntry>,
    batches: usize,
}

impl ExecGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_committed(&mut self, dot: Dot, cmd: Command, deps: DepSet) -> Result<(), ExecutorError> {
        if self.committed.contains_key(&dot) || self.executed.contains(&dot) {
            return Err(ExecutorError::DuplicateCommit(dot));
        }
        self.committed.insert(dot, (cmd, deps));
        Ok(())
    }

    pub fn is_executed(&self, dot: &Dot) -> bool {
        self.executed.contains(dot)
    }

    pub fn pending(&self) -> impl Iterator<Item = &Dot> {
        self.committed.keys()
    }

    pub fn executed(&self) -> &BTreeSet<Dot> {
        &self.executed
    }

    /// Every executed identifier in execution order, Noops included.
    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Emits every batch that is currently eligible, in execution order.
    /// Noops are marked executed and kept in the batch so callers can tell
    /// them apart; the application must skip them.
    pub fn try_execute(&mut self) -> Vec<Vec<(Dot, Command)>> {
        let components = self.eligible_components();
        let mut out = Vec::with_capacity(components.len());
        for scc in components {
            let mut batch = Vec::with_capacity(scc.len());
            for dot in scc {
                let (cmd, _) = self.committed.remove(&dot).expect("component member is committed");
                self.executed.insert(dot);
                self.log.push(LogEntry { batch: self.batches, dot, cmd: cmd.clone() });
                batch.push((dot, cmd));
            }
            self.batches += 1;
            out.push(batch);
        }
        out
    }

    /// Iterative Tarjan over pending identifiers. Components come out in
    /// reverse topological order, i.e. dependencies first.
    fn eligible_components(&self) -> Vec<Vec<Dot>> {
        let nodes: Vec<Dot> = self.committed.keys().copied().collect();
        let index_of: BTreeMap<Dot, usize> = nodes.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        // Out-edges to pending nodes; a dependency neither pending nor
        // executed blocks the node.
        let mut edges: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        let mut blocked = vec![false; nodes.len()];
        for (i, dot) in nodes.iter().enumerate() {
            for dep in &self.committed[dot].1 {
                if let Some(&j) = index_of.get(dep) {
                    edges[i].push(j);
                } else if !self.executed.contains(dep) {
                    blocked[i] = true;
                }
            }
        }

        const UNVISITED: usize = usize::MAX;
        let mut index = vec![UNVISITED; nodes.len()];
        let mut low = vec![0; nodes.len()];
        let mut on_stack = vec![false; nodes.len()];
        let mut comp_of = vec![UNVISITED; nodes.len()];
        let mut comp_blocked: Vec<bool> = Vec::new();
        let mut stack = Vec::new();
        let mut next_index = 0;
        let mut result = Vec::new();

        for root in 0..nodes.len() {
            if index[root] != UNVISITED {
                continue;
            }
            // (node, next edge position)
            let mut call: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = next_index;
            low[root] = next_index;
            next_index += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut pos)) = call.last_mut() {
                if *pos < edges[v].len() {
                    let w = edges[v][*pos];
                    *pos += 1;
                    if index[w] == UNVISITED {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                    continue;
                }
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] != index[v] {
                    continue;
                }
                let id = comp_blocked.len();
                let mut members = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp_of[w] = id;
                    members.push(w);
                    if w == v {
                        break;
                    }
                }
                // Every component reachable from this one has already been
                // emitted, so its blocked flag is final.
                let is_blocked = members.iter().any(|&m| {
                    blocked[m]
                        || edges[m].iter().any(|&t| comp_of[t] != id && comp_blocked[comp_of[t]])
                });
                comp_blocked.push(is_blocked);
                if !is_blocked {
                    let mut dots: Vec<Dot> = members.iter().map(|&m| nodes[m]).collect();
                    dots.sort();
                    result.push(dots);
                }
            }
        }
        result
    }
}
