//! The per-process replication state machine.
//!
//! A [`Process`] owns one [`CommandInfo`] record per identifier it has heard
//! of and reacts to the seven message kinds. Handlers never perform I/O: each
//! call returns a [`HandlerOutput`] listing messages for other processes,
//! commands newly committed locally, and [`Note`]s describing the decisions
//! taken (used to build traces). Messages a process sends to itself are
//! applied synchronously inside the same call.
//!
//! Quorums are fixed per process from a latency row: the fast quorum of `i`
//! is `i` plus the `floor(n/2) + f - 1` closest processes (ties broken by the
//! smaller id) and the slow quorum is `i` plus the `f` closest.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::ProtocolError;
use crate::types::{
    conflict, next_ballot, Ballot, Command, ConflictMode, DepSet, Dot, Message, Phase, ProcessId,
    Quorum,
};

/// Protocol switches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Propose only the dependencies reported by at least `f` fast-quorum
    /// members when taking the slow path.
    pub slow_path_pruning: bool,
    /// Commit single-key reads from a plain majority and leave them out of
    /// every dependency set.
    pub nfr_reads: bool,
    pub conflict_mode: ConflictMode,
}

/// Everything a process knows about one identifier.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandInfo {
    pub cmd: Command,
    pub phase: Phase,
    pub deps: DepSet,
    /// The fast quorum chosen by the initial coordinator; empty until the
    /// `MCollect` is processed.
    pub quorum: Quorum,
    pub bal: Ballot,
    pub abal: Ballot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    To(ProcessId),
    /// Every process other than the sender.
    Broadcast,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outbound {
    pub to: Destination,
    pub msg: Message,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitPath {
    Fast,
    Slow,
    Recovered,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Committed {
    pub dot: Dot,
    pub cmd: Command,
    pub deps: DepSet,
}

/// A decision taken by this process, reported for trace analysis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "note", rename_all = "snake_case")]
pub enum Note {
    /// The initial coordinator received every `MCollectAck` of its fast
    /// quorum.
    Collected {
        dot: Dot,
        acks: BTreeMap<ProcessId, DepSet>,
        /// Outcome of the threshold-union fast-path condition.
        fast: bool,
        /// Outcome of the stricter "all replies equal" predicate.
        matching: bool,
        /// Committed straight away as a non-fault-tolerant read.
        read_optimized: bool,
        union: DepSet,
        /// The dependency set sent to consensus when `fast` is false.
        proposal: Option<DepSet>,
    },
    /// This process broadcast an `MCommit` closing a fast path, a slow path
    /// or a recovery.
    Decided { dot: Dot, cmd: Command, deps: DepSet, path: CommitPath, ballot: Ballot },
    RecoveryStarted { dot: Dot, ballot: Ballot },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HandlerOutput {
    pub outbound: Vec<Outbound>,
    pub committed: Vec<Committed>,
    pub notes: Vec<Note>,
}

impl HandlerOutput {
    pub fn is_empty(&self) -> bool {
        self.outbound.is_empty() && self.committed.is_empty() && self.notes.is_empty()
    }
}

/// Union of every reported dependency set.
pub fn union_deps<'a>(deps: impl IntoIterator<Item = &'a DepSet>) -> DepSet {
    let mut out = DepSet::new();
    for d in deps {
        out.extend(d.iter().copied());
    }
    out
}

/// Identifiers reported by at least `threshold` of the given sets.
pub fn threshold_union<'a>(deps: impl IntoIterator<Item = &'a DepSet>, threshold: usize) -> DepSet {
    let mut count: BTreeMap<Dot, usize> = BTreeMap::new();
    for d in deps {
        for dot in d {
            *count.entry(*dot).or_default() += 1;
        }
    }
    count
        .into_iter()
        .filter(|&(_, m)| m >= threshold)
        .map(|(dot, _)| dot)
        .collect()
}

/// The fast path may be taken iff every reported dependency has
/// multiplicity at least `f` among the fast-quorum replies.
pub fn fast_path_condition(acks: &BTreeMap<ProcessId, DepSet>, f: usize) -> bool {
    union_deps(acks.values()) == threshold_union(acks.values(), f)
}

/// The classic predicate: every fast-quorum reply is identical.
pub fn matching_replies(acks: &BTreeMap<ProcessId, DepSet>) -> bool {
    let mut it = acks.values();
    match it.next() {
        None => true,
        Some(first) => it.all(|d| d == first),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct RecoverAck {
    cmd: Command,
    deps: DepSet,
    initial_quorum: Quorum,
    accepted_ballot: Ballot,
}

/// One replica of the protocol.
#[derive(Clone, Debug)]
pub struct Process {
    id: ProcessId,
    n: u32,
    f: u32,
    config: ProtocolConfig,
    /// All processes, closest first; `proximity[0] == id`.
    proximity: Vec<ProcessId>,
    info: BTreeMap<Dot, CommandInfo>,
    next_seq: u64,
    collect_acks: BTreeMap<Dot, BTreeMap<ProcessId, DepSet>>,
    consensus_acks: BTreeMap<(Dot, Ballot), BTreeSet<ProcessId>>,
    recover_acks: BTreeMap<(Dot, Ballot), BTreeMap<ProcessId, RecoverAck>>,
    fired: BTreeSet<(Dot, Ballot, u8)>,
    parked: BTreeMap<Dot, Vec<(ProcessId, Message)>>,
    crashed: bool,
}

const COLLECT: u8 = 0;
const CONSENSUS: u8 = 1;
const RECOVER: u8 = 2;

impl Process {
    /// `latency_row[j]` is the one-way delay from this process to process
    /// `j + 1`; it only drives quorum selection.
    pub fn new(id: ProcessId, n: u32, f: u32, latency_row: &[u64], config: ProtocolConfig) -> Self {
        assert!(id.0 >= 1 && id.0 <= n, "process id out of range");
        assert!(f >= 1 && f <= (n - 1) / 2 || n < 3, "f out of range");
        assert_eq!(latency_row.len(), n as usize, "latency row must have n entries");
        let mut others: Vec<ProcessId> = (1..=n).map(ProcessId).filter(|&p| p != id).collect();
        others.sort_by_key(|p| (latency_row[p.index()], *p));
        let mut proximity = vec![id];
        proximity.extend(others);
        Process {
            id,
            n,
            f,
            config,
            proximity,
            info: BTreeMap::new(),
            next_seq: 1,
            collect_acks: BTreeMap::new(),
            consensus_acks: BTreeMap::new(),
            recover_acks: BTreeMap::new(),
            fired: BTreeSet::new(),
            parked: BTreeMap::new(),
            crashed: false,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn f(&self) -> u32 {
        self.f
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn info(&self, dot: &Dot) -> Option<&CommandInfo> {
        self.info.get(dot)
    }

    pub fn phase(&self, dot: &Dot) -> Phase {
        self.info.get(dot).map(|i| i.phase).unwrap_or_default()
    }

    pub fn known_dots(&self) -> impl Iterator<Item = (&Dot, &CommandInfo)> {
        self.info.iter()
    }

    pub fn parked_count(&self, dot: &Dot) -> usize {
        self.parked.get(dot).map_or(0, Vec::len)
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed
    }

    pub fn crash(&mut self) {
        self.crashed = true;
    }

    fn is_read_optimized(&self, cmd: &Command) -> bool {
        self.config.nfr_reads && cmd.is_transitive_read()
    }

    /// The fast quorum this process uses as initial coordinator of `cmd`.
    pub fn fast_quorum(&self, cmd: &Command) -> Quorum {
        let size = if self.is_read_optimized(cmd) {
            self.n / 2 + 1
        } else {
            self.n / 2 + self.f
        };
        self.proximity.iter().take(size as usize).copied().collect()
    }

    pub fn slow_quorum(&self) -> Quorum {
        self.proximity.iter().take(self.f as usize + 1).copied().collect()
    }

    /// Identifiers past their start phase whose command conflicts with `cmd`.
    /// Non-fault-tolerant reads never appear when that optimization is on.
    pub fn conflicts(&self, cmd: &Command) -> DepSet {
        self.info
            .iter()
            .filter(|(_, i)| i.phase != Phase::Start)
            .filter(|(_, i)| !self.is_read_optimized(&i.cmd))
            .filter(|(_, i)| conflict(cmd, &i.cmd, self.config.conflict_mode))
            .map(|(dot, _)| *dot)
            .collect()
    }

    /// Assigns a fresh identifier to `cmd` and starts its collect phase.
    pub fn submit(&mut self, cmd: Command) -> Result<(Dot, HandlerOutput), ProtocolError> {
        if self.crashed {
            return Err(ProtocolError::Crashed(self.id));
        }
        if cmd.is_noop() {
            return Err(ProtocolError::NoopSubmission);
        }
        let dot = Dot { proc: self.id, seq: self.next_seq };
        self.next_seq += 1;
        let past = self.conflicts(&cmd);
        let quorum = self.fast_quorum(&cmd);
        let emitted = quorum
            .iter()
            .map(|&p| Outbound {
                to: Destination::To(p),
                msg: Message::MCollect { dot, cmd: cmd.clone(), past: past.clone(), quorum: quorum.clone() },
            })
            .collect();
        let mut out = HandlerOutput::default();
        self.route(emitted, &mut out);
        Ok((dot, out))
    }

    /// Takes over coordination of `dot` with a fresh ballot owned by this
    /// process. No-op once `dot` is committed here.
    pub fn recover(&mut self, dot: Dot) -> HandlerOutput {
        let mut out = HandlerOutput::default();
        if self.crashed || self.phase(&dot).is_committed_or_executed() {
            return out;
        }
        let info = self.info.get(&dot).cloned().unwrap_or_default();
        let ballot = next_ballot(self.id, info.bal, self.n);
        out.notes.push(Note::RecoveryStarted { dot, ballot });
        let msg = Message::MRecover { dot, cmd: info.cmd, ballot };
        self.route(vec![Outbound { to: Destination::Broadcast, msg }], &mut out);
        out
    }

    /// Processes one message from `from`.
    pub fn handle(&mut self, from: ProcessId, msg: Message) -> HandlerOutput {
        let mut out = HandlerOutput::default();
        if self.crashed {
            return out;
        }
        self.apply(from, msg, &mut out);
        out
    }

    /// Marks a committed identifier as executed.
    pub fn mark_executed(&mut self, dot: &Dot) {
        if let Some(info) = self.info.get_mut(dot) {
            debug_assert_eq!(info.phase, Phase::Committed);
            info.phase = Phase::Executed;
        }
    }

    fn route(&mut self, emitted: Vec<Outbound>, out: &mut HandlerOutput) {
        let mut local = VecDeque::new();
        for o in emitted {
            match o.to {
                Destination::To(p) if p == self.id => local.push_back(o.msg),
                Destination::To(_) => out.outbound.push(o),
                Destination::Broadcast => {
                    local.push_back(o.msg.clone());
                    out.outbound.push(o);
                }
            }
        }
        while let Some(msg) = local.pop_front() {
            let emitted = self.dispatch(self.id, msg, out);
            for o in emitted {
                match o.to {
                    Destination::To(p) if p == self.id => local.push_back(o.msg),
                    Destination::To(_) => out.outbound.push(o),
                    Destination::Broadcast => {
                        local.push_back(o.msg.clone());
                        out.outbound.push(o);
                    }
                }
            }
        }
    }

    fn apply(&mut self, from: ProcessId, msg: Message, out: &mut HandlerOutput) {
        let dot = msg.dot();
        let emitted = self.dispatch(from, msg, out);
        self.route(emitted, out);
        self.retry_parked(dot, out);
    }

    fn retry_parked(&mut self, dot: Dot, out: &mut HandlerOutput) {
        let Some(parked) = self.parked.remove(&dot) else { return };
        let (ready, waiting): (Vec<_>, Vec<_>) =
            parked.into_iter().partition(|(_, m)| self.collect_enabled(&m.dot()));
        if !waiting.is_empty() && !self.phase(&dot).is_committed_or_executed() {
            self.parked.insert(dot, waiting);
        }
        for (from, msg) in ready {
            let emitted = self.dispatch(from, msg, out);
            self.route(emitted, out);
        }
    }

    fn collect_enabled(&self, dot: &Dot) -> bool {
        // An identifier that accepted a consensus proposal before its
        // MCollect arrived keeps that proposal.
        self.info
            .get(dot)
            .is_none_or(|i| i.phase == Phase::Start && i.bal.is_zero())
    }

    fn dispatch(&mut self, from: ProcessId, msg: Message, out: &mut HandlerOutput) -> Vec<Outbound> {
        match msg {
            Message::MCollect { dot, cmd, past, quorum } => {
                self.on_collect(from, dot, cmd, past, quorum)
            }
            Message::MCollectAck { dot, deps } => self.on_collect_ack(from, dot, deps, out),
            Message::MConsensus { dot, cmd, deps, ballot } => {
                self.on_consensus(from, dot, cmd, deps, ballot)
            }
            Message::MConsensusAck { dot, ballot } => self.on_consensus_ack(from, dot, ballot, out),
            Message::MCommit { dot, cmd, deps } => {
                self.on_commit(dot, cmd, deps, out);
                Vec::new()
            }
            Message::MRecover { dot, cmd, ballot } => self.on_recover(from, dot, cmd, ballot),
            Message::MRecoverAck { dot, cmd, deps, initial_quorum, accepted_ballot, ballot } => {
                let ack = RecoverAck { cmd, deps, initial_quorum, accepted_ballot };
                self.on_recover_ack(from, dot, ack, ballot)
            }
        }
    }

    fn on_collect(
        &mut self,
        from: ProcessId,
        dot: Dot,
        cmd: Command,
        past: DepSet,
        quorum: Quorum,
    ) -> Vec<Outbound> {
        if !self.collect_enabled(&dot) {
            if !self.phase(&dot).is_committed_or_executed() {
                let msg = Message::MCollect { dot, cmd, past, quorum };
                self.parked.entry(dot).or_default().push((from, msg));
            }
            return Vec::new();
        }
        let mut deps = self.conflicts(&cmd);
        deps.extend(past);
        let info = self.info.entry(dot).or_default();
        debug_assert!(info.quorum.is_empty());
        info.deps = deps.clone();
        info.cmd = cmd;
        info.quorum = quorum;
        info.phase = Phase::Collect;
        vec![Outbound { to: Destination::To(from), msg: Message::MCollectAck { dot, deps } }]
    }

    fn on_collect_ack(
        &mut self,
        from: ProcessId,
        dot: Dot,
        deps: DepSet,
        out: &mut HandlerOutput,
    ) -> Vec<Outbound> {
        let Some(info) = self.info.get(&dot) else { return Vec::new() };
        if info.phase != Phase::Collect
            || !info.quorum.contains(&from)
            || self.fired.contains(&(dot, Ballot::ZERO, COLLECT))
        {
            return Vec::new();
        }
        let quorum_size = info.quorum.len();
        let acks = self.collect_acks.entry(dot).or_default();
        acks.insert(from, deps);
        if acks.len() < quorum_size {
            return Vec::new();
        }
        let acks = self.collect_acks.remove(&dot).unwrap_or_default();
        self.fired.insert((dot, Ballot::ZERO, COLLECT));
        let cmd = info.cmd.clone();
        let union = union_deps(acks.values());
        let matching = matching_replies(&acks);
        let read_optimized = self.is_read_optimized(&cmd);
        let fast = read_optimized || fast_path_condition(&acks, self.f as usize);
        if fast {
            out.notes.push(Note::Collected {
                dot,
                acks,
                fast,
                matching,
                read_optimized,
                union: union.clone(),
                proposal: None,
            });
            out.notes.push(Note::Decided {
                dot,
                cmd: cmd.clone(),
                deps: union.clone(),
                path: CommitPath::Fast,
                ballot: Ballot::ZERO,
            });
            return vec![Outbound {
                to: Destination::Broadcast,
                msg: Message::MCommit { dot, cmd, deps: union },
            }];
        }
        let proposal = if self.config.slow_path_pruning {
            threshold_union(acks.values(), self.f as usize)
        } else {
            union.clone()
        };
        out.notes.push(Note::Collected {
            dot,
            acks,
            fast,
            matching,
            read_optimized,
            union,
            proposal: Some(proposal.clone()),
        });
        let ballot = Ballot(self.id.0 as u64);
        self.slow_quorum()
            .into_iter()
            .map(|p| Outbound {
                to: Destination::To(p),
                msg: Message::MConsensus { dot, cmd: cmd.clone(), deps: proposal.clone(), ballot },
            })
            .collect()
    }

    fn on_consensus(
        &mut self,
        from: ProcessId,
        dot: Dot,
        cmd: Command,
        deps: DepSet,
        ballot: Ballot,
    ) -> Vec<Outbound> {
        let info = self.info.entry(dot).or_default();
        if info.bal > ballot {
            return Vec::new();
        }
        if !info.phase.is_committed_or_executed() {
            info.cmd = cmd;
            info.deps = deps;
        }
        info.bal = ballot;
        info.abal = ballot;
        vec![Outbound { to: Destination::To(from), msg: Message::MConsensusAck { dot, ballot } }]
    }

    fn on_consensus_ack(
        &mut self,
        from: ProcessId,
        dot: Dot,
        ballot: Ballot,
        out: &mut HandlerOutput,
    ) -> Vec<Outbound> {
        let Some(info) = self.info.get(&dot) else { return Vec::new() };
        if info.bal != ballot
            || info.phase.is_committed_or_executed()
            || self.fired.contains(&(dot, ballot, CONSENSUS))
        {
            return Vec::new();
        }
        let acks = self.consensus_acks.entry((dot, ballot)).or_default();
        acks.insert(from);
        if acks.len() < self.f as usize + 1 {
            return Vec::new();
        }
        self.consensus_acks.remove(&(dot, ballot));
        self.fired.insert((dot, ballot, CONSENSUS));
        let path = if ballot.0 <= self.n as u64 { CommitPath::Slow } else { CommitPath::Recovered };
        out.notes.push(Note::Decided {
            dot,
            cmd: info.cmd.clone(),
            deps: info.deps.clone(),
            path,
            ballot,
        });
        vec![Outbound {
            to: Destination::Broadcast,
            msg: Message::MCommit { dot, cmd: info.cmd.clone(), deps: info.deps.clone() },
        }]
    }

    fn on_commit(&mut self, dot: Dot, cmd: Command, deps: DepSet, out: &mut HandlerOutput) {
        let info = self.info.entry(dot).or_default();
        if info.phase.is_committed_or_executed() {
            return;
        }
        info.cmd = cmd.clone();
        info.deps = deps.clone();
        info.phase = Phase::Committed;
        self.parked.remove(&dot);
        self.collect_acks.remove(&dot);
        let range = (dot, Ballot::ZERO)..=(dot, Ballot(u64::MAX));
        let stale: Vec<_> = self.consensus_acks.range(range.clone()).map(|(k, _)| *k).collect();
        for k in stale {
            self.consensus_acks.remove(&k);
        }
        let stale: Vec<_> = self.recover_acks.range(range).map(|(k, _)| *k).collect();
        for k in stale {
            self.recover_acks.remove(&k);
        }
        out.committed.push(Committed { dot, cmd, deps });
    }

    fn on_recover(&mut self, from: ProcessId, dot: Dot, cmd: Command, ballot: Ballot) -> Vec<Outbound> {
        let first_seen = !self.info.contains_key(&dot);
        let conflicts = if first_seen || self.phase(&dot) == Phase::Start {
            Some(self.conflicts(&cmd))
        } else {
            None
        };
        let info = self.info.entry(dot).or_default();
        if info.phase.is_committed_or_executed() {
            let msg = Message::MCommit { dot, cmd: info.cmd.clone(), deps: info.deps.clone() };
            return vec![Outbound { to: Destination::To(from), msg }];
        }
        if info.bal >= ballot {
            return Vec::new();
        }
        if info.bal.is_zero() && info.phase == Phase::Start {
            info.deps = conflicts.unwrap_or_default();
            info.cmd = cmd;
        }
        info.bal = ballot;
        info.phase = Phase::Recovering;
        let msg = Message::MRecoverAck {
            dot,
            cmd: info.cmd.clone(),
            deps: info.deps.clone(),
            initial_quorum: info.quorum.clone(),
            accepted_ballot: info.abal,
            ballot,
        };
        vec![Outbound { to: Destination::To(from), msg }]
    }

    fn on_recover_ack(
        &mut self,
        from: ProcessId,
        dot: Dot,
        ack: RecoverAck,
        ballot: Ballot,
    ) -> Vec<Outbound> {
        let Some(info) = self.info.get(&dot) else { return Vec::new() };
        if info.bal != ballot
            || info.phase.is_committed_or_executed()
            || self.fired.contains(&(dot, ballot, RECOVER))
        {
            return Vec::new();
        }
        let acks = self.recover_acks.entry((dot, ballot)).or_default();
        acks.insert(from, ack);
        if acks.len() < (self.n - self.f) as usize {
            return Vec::new();
        }
        let acks = self.recover_acks.remove(&(dot, ballot)).unwrap_or_default();
        self.fired.insert((dot, ballot, RECOVER));
        let (cmd, deps) = recovery_proposal(dot, &acks);
        vec![Outbound {
            to: Destination::Broadcast,
            msg: Message::MConsensus { dot, cmd, deps, ballot },
        }]
    }
}

/// Chooses the value a recovering coordinator proposes from `n - f`
/// `MRecoverAck` replies.
fn recovery_proposal(dot: Dot, acks: &BTreeMap<ProcessId, RecoverAck>) -> (Command, DepSet) {
    // Highest accepted ballot wins; equal ballots carry equal values.
    if let Some((_, k)) = acks
        .iter()
        .filter(|(_, a)| !a.accepted_ballot.is_zero())
        .max_by(|(p, a), (q, b)| a.accepted_ballot.cmp(&b.accepted_ballot).then(q.cmp(p)))
    {
        return (k.cmd.clone(), k.deps.clone());
    }
    if let Some((_, k)) = acks.iter().find(|(_, a)| !a.initial_quorum.is_empty()) {
        let deps = if acks.contains_key(&dot.proc) {
            union_deps(acks.values().map(|a| &a.deps))
        } else {
            union_deps(
                acks.iter()
                    .filter(|(p, _)| k.initial_quorum.contains(p))
                    .map(|(_, a)| &a.deps),
            )
        };
        return (k.cmd.clone(), deps);
    }
    (Command::Noop, DepSet::new())
}
