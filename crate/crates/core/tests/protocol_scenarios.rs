//! Hand-scheduled message interleavings over real `Process` instances.

mod common;

use std::collections::VecDeque;

use atlas::executor::ExecGraph;
use atlas::protocol::{CommitPath, Committed, Destination, HandlerOutput, Note, Process, ProtocolConfig};
use atlas::types::{next_ballot, Ballot, Command, CommandId, DepSet, Dot, Message, Phase, ProcessId};
use common::*;

/// A cluster whose messages are delivered only when the test says so.
struct Net {
    ps: Vec<Process>,
    queue: VecDeque<(ProcessId, ProcessId, Message)>,
    notes: Vec<(ProcessId, Note)>,
    commits: Vec<(ProcessId, Committed)>,
    crashed: Vec<ProcessId>,
}

impl Net {
    /// Process `i` is `|i - j|` away from `j`, so fast quorums are the
    /// nearest ids.
    fn new(n: u32, f: u32, config: ProtocolConfig) -> Self {
        let ps = (1..=n)
            .map(|i| {
                let row: Vec<u64> = (1..=n).map(|j| (i as i64 - j as i64).unsigned_abs()).collect();
                Process::new(p(i), n, f, &row, config)
            })
            .collect();
        Net { ps, queue: VecDeque::new(), notes: Vec::new(), commits: Vec::new(), crashed: Vec::new() }
    }

    fn absorb(&mut self, from: ProcessId, out: HandlerOutput) {
        for o in out.outbound {
            match o.to {
                Destination::To(q) => self.queue.push_back((from, q, o.msg)),
                Destination::Broadcast => {
                    for q in (1..=self.ps.len() as u32).map(p).filter(|&q| q != from) {
                        self.queue.push_back((from, q, o.msg.clone()));
                    }
                }
            }
        }
        self.notes.extend(out.notes.into_iter().map(|n| (from, n)));
        self.commits.extend(out.committed.into_iter().map(|c| (from, c)));
    }

    fn submit(&mut self, at: u32, seq: u64, key: &str) -> Dot {
        let cmd = Command::put(CommandId { caller: p(at), client: 0, seq }, key, "v");
        let (dot, out) = self.ps[p(at).index()].submit(cmd).unwrap();
        self.absorb(p(at), out);
        dot
    }

    fn recover(&mut self, at: u32, dot: Dot) {
        let out = self.ps[p(at).index()].recover(dot);
        self.absorb(p(at), out);
    }

    /// Delivers queued messages matching `pred`, including those they
    /// trigger, until none match.
    fn deliver_where(&mut self, pred: impl Fn(ProcessId, ProcessId, &Message) -> bool) {
        loop {
            let Some(pos) = self.queue.iter().position(|(f, t, m)| pred(*f, *t, m)) else { return };
            let (from, to, msg) = self.queue.remove(pos).unwrap();
            if self.crashed.contains(&to) {
                continue;
            }
            let out = self.ps[to.index()].handle(from, msg);
            self.absorb(to, out);
        }
    }

    fn deliver_all(&mut self) {
        self.deliver_where(|_, _, _| true);
    }

    fn crash(&mut self, who: u32) {
        self.ps[p(who).index()].crash();
        self.crashed.push(p(who));
        self.queue.retain(|(f, _, _)| *f != p(who));
    }

    fn committed(&self, at: u32, dot: Dot) -> Option<(Command, DepSet)> {
        let info = self.ps[p(at).index()].info(&dot)?;
        info.phase.is_committed_or_executed().then(|| (info.cmd.clone(), info.deps.clone()))
    }

    fn decided(&self, dot: Dot) -> Vec<CommitPath> {
        self.notes
            .iter()
            .filter_map(|(_, n)| match n {
                Note::Decided { dot: d, path, .. } if *d == dot => Some(*path),
                _ => None,
            })
            .collect()
    }

    /// Executes each process's commits and returns its execution order.
    fn execution_order(&self, at: u32) -> Vec<Dot> {
        let mut g = ExecGraph::new();
        for (_, c) in self.commits.iter().filter(|(q, _)| *q == p(at)) {
            g.add_committed(c.dot, c.cmd.clone(), c.deps.clone()).unwrap();
        }
        g.try_execute().into_iter().flatten().map(|(d, _)| d).collect()
    }
}

fn is_collect(m: &Message) -> bool {
    matches!(m, Message::MCollect { .. } | Message::MCollectAck { .. })
}

#[test]
fn slow_commit_taken_over_by_recoverer() {
    let pruning = ProtocolConfig { slow_path_pruning: true, ..Default::default() };
    let mut net = Net::new(5, 2, pruning);
    let a = net.submit(1, 1, "x");
    let b = net.submit(5, 1, "x");
    // Process 4 receives b before a.
    net.deliver_where(|f, t, m| f == p(5) && t == p(4) && matches!(m, Message::MCollect { .. }));
    // a is collected at 2, 3, 4; b was declared only by 4, so 1 goes slow
    // and proposes the dependencies declared at least f times: none.
    net.deliver_where(|f, t, m| (f == p(1) || t == p(1)) && is_collect(m));
    let proposal = net.notes.iter().find_map(|(_, n)| match n {
        Note::Collected { dot, fast: false, proposal, .. } if *dot == a => proposal.clone(),
        _ => None,
    });
    assert_eq!(proposal, Some(DepSet::new()));
    // The slow quorum accepts, but 1 becomes slow before hearing back.
    net.deliver_where(|f, _, m| f == p(1) && matches!(m, Message::MConsensus { .. }));
    assert_eq!(net.ps[1].info(&a).unwrap().abal, Ballot(1));

    // 2 suspects 1 and takes over with a ballot it owns.
    net.recover(2, a);
    let ballot = next_ballot(p(2), Ballot(1), 5);
    assert_eq!(ballot, Ballot(7));
    // It hears from the majority {2, 3, 4}. Its own fresh view would be
    // {b} (process 4 reports it), but the accepted value wins.
    net.deliver_where(|f, t, m| {
        (f == p(2) && [3, 4].contains(&t.0) && matches!(m, Message::MRecover { .. }))
            || (t == p(2) && matches!(m, Message::MRecoverAck { .. }))
    });
    // The takeover completes before 1 hears anything back.
    net.deliver_where(|_, t, m| t != p(1) && !is_collect(m));
    net.deliver_all();

    for i in 1..=5 {
        assert_eq!(net.committed(i, a).unwrap().1, DepSet::new(), "process {i}");
        assert_eq!(net.committed(i, b).unwrap().1, deps(&[a]), "process {i}");
        assert_eq!(net.execution_order(i), vec![a, b], "process {i}");
    }
    assert!(net.decided(a).contains(&CommitPath::Recovered));
    assert_eq!(net.decided(b), vec![CommitPath::Fast]);
}

#[test]
fn lost_payload_recovers_as_noop() {
    let mut net = Net::new(5, 2, ProtocolConfig::default());
    let a = net.submit(1, 1, "x");
    // The MCollect reaches 2 only, then the coordinator crashes.
    net.deliver_where(|_, t, m| t == p(2) && matches!(m, Message::MCollect { .. }));
    net.crash(1);
    net.queue.retain(|(_, t, _)| *t != p(1));
    // 3 recovers and hears from 3, 4, 5: nobody saw the command.
    net.recover(3, a);
    net.deliver_where(|f, t, m| {
        (f == p(3) && [4, 5].contains(&t.0) && matches!(m, Message::MRecover { .. }))
            || (t == p(3) && matches!(m, Message::MRecoverAck { .. }))
    });
    net.deliver_all();
    for i in 2..=5 {
        let (cmd, deps) = net.committed(i, a).unwrap();
        assert!(cmd.is_noop(), "process {i}");
        assert!(deps.is_empty());
    }
}

#[test]
fn partial_payload_recovers_original_command() {
    let mut net = Net::new(5, 2, ProtocolConfig::default());
    let a = net.submit(1, 1, "x");
    net.deliver_where(|_, t, m| t == p(2) && matches!(m, Message::MCollect { .. }));
    net.crash(1);
    net.queue.retain(|(_, t, _)| *t != p(1));
    // This time 2, which holds the payload, answers.
    net.recover(3, a);
    net.deliver_where(|f, t, m| {
        (f == p(3) && [2, 4].contains(&t.0) && matches!(m, Message::MRecover { .. }))
            || (t == p(3) && matches!(m, Message::MRecoverAck { .. }))
    });
    net.deliver_all();
    for i in 2..=5 {
        let (cmd, _) = net.committed(i, a).unwrap();
        assert_eq!(cmd.id(), Some(CommandId { caller: p(1), client: 0, seq: 1 }), "process {i}");
    }
}

#[test]
fn recovery_learns_fast_commit_from_mcommit_reply() {
    let mut net = Net::new(3, 1, ProtocolConfig::default());
    let a = net.submit(1, 1, "x");
    net.deliver_where(|f, t, m| (f == p(1) || t == p(1)) && is_collect(m));
    assert_eq!(net.decided(a), vec![CommitPath::Fast]);
    // The fast-path MCommit reaches 2 only.
    net.deliver_where(|_, t, m| t == p(2) && matches!(m, Message::MCommit { .. }));
    net.crash(1);
    net.queue.retain(|(_, t, _)| *t != p(1));
    let expected = net.committed(2, a).unwrap();
    net.recover(3, a);
    net.deliver_all();
    assert_eq!(net.committed(3, a).unwrap(), expected);
    assert!(!net.decided(a).contains(&CommitPath::Recovered));
}

#[test]
fn recovery_rebuilds_fast_path_value_without_coordinator() {
    // n = 5, f = 2: a fast-path commit reaches nobody, the coordinator
    // crashes, and a recoverer must rebuild the same dependencies by union.
    let mut net = Net::new(5, 2, ProtocolConfig::default());
    let b = net.submit(4, 1, "x");
    net.deliver_where(|f, t, m| f == p(4) && [2, 3].contains(&t.0) && matches!(m, Message::MCollect { .. }));
    let a = net.submit(1, 1, "x");
    net.deliver_where(|f, t, m| (f == p(1) || t == p(1)) && is_collect(m));
    let fast_deps = net.notes.iter().find_map(|(_, n)| match n {
        Note::Decided { dot, path: CommitPath::Fast, deps, .. } if *dot == a => Some(deps.clone()),
        _ => None,
    });
    assert_eq!(fast_deps, Some(deps(&[b])));
    let fast_deps = fast_deps.unwrap();
    // Drop the coordinator's MCommits on the floor.
    net.crash(1);
    net.queue.retain(|(f, t, _)| *f != p(1) && *t != p(1));
    net.recover(5, a);
    net.deliver_all();
    for i in 2..=5 {
        assert_eq!(net.committed(i, a).unwrap().1, fast_deps, "process {i}");
    }
}

#[test]
fn dueling_recoveries_agree() {
    let mut net = Net::new(5, 2, ProtocolConfig::default());
    let b = net.submit(5, 1, "x");
    net.deliver_where(|f, t, m| f == p(5) && t == p(4) && matches!(m, Message::MCollect { .. }));
    let a = net.submit(1, 1, "x");
    net.deliver_where(|_, t, m| [2, 4].contains(&t.0) && matches!(m, Message::MCollect { .. }));
    net.crash(1);
    net.queue.retain(|(f, t, _)| *f != p(1) && *t != p(1));
    net.recover(2, a);
    net.recover(3, a);
    net.recover(4, a);
    // Interleave: deliver in reverse queue order to stress guards.
    while let Some((from, to, msg)) = net.queue.pop_back() {
        if net.crashed.contains(&to) {
            continue;
        }
        let out = net.ps[to.index()].handle(from, msg);
        net.absorb(to, out);
    }
    net.deliver_all();
    let values: Vec<_> = (2..=5).map(|i| net.committed(i, a)).collect();
    assert!(values[0].is_some());
    assert!(values.iter().all(|v| v == &values[0]), "{values:?}");
    let _ = b;
}

#[test]
fn late_collect_does_not_overwrite_accepted_value() {
    let mut net = Net::new(5, 2, ProtocolConfig::default());
    let a = dot(1, 1);
    let accepted = Message::MConsensus {
        dot: a,
        cmd: Command::Noop,
        deps: deps(&[dot(9, 9)]),
        ballot: Ballot(7),
    };
    let out = net.ps[2].handle(p(2), accepted);
    assert!(!out.is_empty());
    let cmd = Command::put(CommandId { caller: p(1), client: 0, seq: 1 }, "x", "v");
    let late = Message::MCollect { dot: a, cmd, past: DepSet::new(), quorum: [1, 2, 3, 4].into_iter().map(p).collect() };
    assert!(net.ps[2].handle(p(1), late).is_empty());
    let info = net.ps[2].info(&a).unwrap();
    assert_eq!(info.deps, deps(&[dot(9, 9)]));
    assert_eq!(info.phase, Phase::Start);
    assert_eq!(net.ps[2].parked_count(&a), 1);
}

#[test]
fn nfr_reads_stay_out_of_dependencies() {
    let nfr = ProtocolConfig { nfr_reads: true, ..Default::default() };
    let mut net = Net::new(5, 2, nfr);
    let read_cmd = Command::get(CommandId { caller: p(1), client: 0, seq: 1 }, "x");
    let (r, out) = net.ps[0].submit(read_cmd).unwrap();
    net.absorb(p(1), out);
    net.deliver_all();
    let w = net.submit(2, 1, "x");
    net.deliver_all();
    for i in 1..=5 {
        assert!(net.committed(i, r).unwrap().1.is_empty());
        assert!(!net.committed(i, w).unwrap().1.contains(&r), "process {i}");
    }
    // A later read does depend on the write.
    let read_cmd = Command::get(CommandId { caller: p(3), client: 0, seq: 1 }, "x");
    let (r2, out) = net.ps[2].submit(read_cmd).unwrap();
    net.absorb(p(3), out);
    net.deliver_all();
    assert_eq!(net.committed(3, r2).unwrap().1, deps(&[w]));
}

#[test]
fn unit_delay_counts_from_message_hops() {
    // Count message hops to the coordinator's commit: 2 on the fast path,
    // 4 on the slow path.
    let mut net = Net::new(5, 2, ProtocolConfig::default());
    let a = net.submit(1, 1, "x");
    let b = net.submit(2, 1, "x");
    let mut hops = 0;
    let mut commit_hop = std::collections::BTreeMap::new();
    while !net.queue.is_empty() {
        hops += 1;
        let round: Vec<_> = net.queue.drain(..).collect();
        for (from, to, msg) in round {
            let out = net.ps[to.index()].handle(from, msg);
            for c in &out.committed {
                if c.dot.proc == to {
                    commit_hop.entry(c.dot).or_insert(hops);
                }
            }
            net.absorb(to, out);
        }
    }
    assert_eq!(net.decided(a), vec![CommitPath::Slow]);
    assert_eq!(net.decided(b), vec![CommitPath::Fast]);
    assert_eq!(commit_hop[&a], 4);
    assert_eq!(commit_hop[&b], 2);
}
