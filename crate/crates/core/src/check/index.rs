//! A read-only view of a trace, grouped the way the checkers need it.

use std::collections::{BTreeMap, BTreeSet};

use crate::app::Response;
use crate::protocol::CommitPath;
use crate::sim::trace::{Event, Trace};
use crate::sim::SimConfig;
use crate::types::{Command, CommandId, ConflictMode, DepSet, Dot, Message, Op, ProcessId};

#[derive(Clone, Debug)]
pub struct CommitRecord<'a> {
    pub index: usize,
    pub proc: ProcessId,
    pub cmd: &'a Command,
    pub deps: &'a DepSet,
}

#[derive(Clone, Copy, Debug)]
pub struct ExecRecord {
    pub index: usize,
    pub t: u64,
    pub batch: usize,
    pub dot: Dot,
    pub noop: bool,
}

#[derive(Clone, Debug)]
pub struct InvokeRecord<'a> {
    pub index: usize,
    pub t: u64,
    pub proc: ProcessId,
    pub dot: Dot,
    pub op: &'a Op,
}

#[derive(Clone, Debug)]
pub struct DecisionRecord<'a> {
    pub index: usize,
    pub proc: ProcessId,
    pub dot: Dot,
    pub acks: &'a BTreeMap<ProcessId, DepSet>,
    pub fast: bool,
    pub matching: bool,
    pub read_optimized: bool,
    pub union: &'a DepSet,
    pub proposal: Option<&'a DepSet>,
}

#[derive(Clone, Debug)]
pub struct DecideRecord<'a> {
    pub index: usize,
    pub t: u64,
    pub proc: ProcessId,
    pub dot: Dot,
    pub path: CommitPath,
    pub deps: &'a DepSet,
}

#[derive(Debug)]
pub struct TraceIndex<'a> {
    pub config: SimConfig,
    /// Local `Commit` events by dot.
    pub commits: BTreeMap<Dot, Vec<CommitRecord<'a>>>,
    /// `MCommit` payloads as sent, by dot.
    pub sent_commits: BTreeMap<Dot, Vec<(usize, &'a Command, &'a DepSet)>>,
    pub executions: BTreeMap<ProcessId, Vec<ExecRecord>>,
    pub invokes: BTreeMap<CommandId, InvokeRecord<'a>>,
    pub responses: BTreeMap<CommandId, (usize, ProcessId, &'a Response)>,
    pub decisions: Vec<DecisionRecord<'a>>,
    pub decides: Vec<DecideRecord<'a>>,
    pub crashed: BTreeSet<ProcessId>,
}

impl<'a> TraceIndex<'a> {
    pub fn new(trace: &'a Trace) -> Self {
        let config = trace.config().cloned().unwrap_or_default();
        let mut ix = TraceIndex {
            config,
            commits: BTreeMap::new(),
            sent_commits: BTreeMap::new(),
            executions: BTreeMap::new(),
            invokes: BTreeMap::new(),
            responses: BTreeMap::new(),
            decisions: Vec::new(),
            decides: Vec::new(),
            crashed: BTreeSet::new(),
        };
        for (index, t, event) in trace.events() {
            match event {
                Event::Commit { proc, dot, cmd, deps } => {
                    ix.commits.entry(*dot).or_default().push(CommitRecord { index, proc: *proc, cmd, deps });
                }
                Event::Send { msg: Message::MCommit { dot, cmd, deps }, .. } => {
                    ix.sent_commits.entry(*dot).or_default().push((index, cmd, deps));
                }
                Event::Execute { proc, batch, dot, noop } => {
                    ix.executions.entry(*proc).or_default().push(ExecRecord {
                        index,
                        t,
                        batch: *batch,
                        dot: *dot,
                        noop: *noop,
                    });
                }
                Event::Invoke { proc, id, dot, op } => {
                    ix.invokes.insert(*id, InvokeRecord { index, t, proc: *proc, dot: *dot, op });
                }
                Event::Response { proc, id, response } => {
                    ix.responses.insert(*id, (index, *proc, response));
                }
                Event::CollectDecision { proc, dot, acks, fast, matching, read_optimized, union, proposal } => {
                    ix.decisions.push(DecisionRecord {
                        index,
                        proc: *proc,
                        dot: *dot,
                        acks,
                        fast: *fast,
                        matching: *matching,
                        read_optimized: *read_optimized,
                        union,
                        proposal: proposal.as_ref(),
                    });
                }
                Event::Decide { proc, dot, path, deps, .. } => {
                    ix.decides.push(DecideRecord { index, t, proc: *proc, dot: *dot, path: *path, deps });
                }
                Event::Crash { proc } => {
                    ix.crashed.insert(*proc);
                }
                _ => {}
            }
        }
        ix
    }

    pub fn mode(&self) -> ConflictMode {
        self.config.protocol.conflict_mode
    }

    /// A read that the protocol ordered outside the dependency graph.
    pub fn is_unordered_read(&self, cmd: &Command) -> bool {
        self.config.protocol.nfr_reads && cmd.is_transitive_read()
    }

    /// The command a process committed for `dot`, if any.
    pub fn committed_at(&self, proc: ProcessId, dot: &Dot) -> Option<&CommitRecord<'a>> {
        self.commits.get(dot)?.iter().find(|c| c.proc == proc)
    }

    /// One committed value per dot (the first commit seen).
    pub fn decided(&self) -> impl Iterator<Item = (&Dot, &CommitRecord<'a>)> {
        self.commits.iter().filter_map(|(d, cs)| cs.first().map(|c| (d, c)))
    }

    pub fn alive(&self) -> impl Iterator<Item = ProcessId> + '_ {
        (1..=self.config.n).map(ProcessId).filter(|p| !self.crashed.contains(p))
    }
}
