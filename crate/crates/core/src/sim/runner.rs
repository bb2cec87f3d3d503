//! The discrete-event loop.
//!
//! Events are ordered by virtual time, then by the order in which they were
//! scheduled. All randomness comes from one seed split into independent
//! ChaCha streams (network delays, workload, recovery jitter), so a run is a
//! pure function of its configuration.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::app::App;
use crate::error::ConfigError;
use crate::executor::ExecGraph;
use crate::protocol::{Destination, HandlerOutput, Note, Process};
use crate::sim::config::SimConfig;
use crate::sim::trace::{Event, RunOutcome, Trace};
use crate::sim::workload::Workload;
use crate::types::{AppCommand, Command, CommandId, Dot, Message, Op, ProcessId};

const NETWORK_STREAM: u64 = 1;
const WORKLOAD_STREAM: u64 = 2;
const RECOVERY_STREAM: u64 = 3;
const MAX_BACKOFF_EXP: u32 = 4;

#[derive(Debug)]
enum Ev {
    Crash(ProcessId),
    Deliver { id: u64, from: ProcessId, to: ProcessId, msg: Message },
    ClientNext { proc: ProcessId, client: u32 },
    Scripted(usize),
    RecoveryTimer { proc: ProcessId, dot: Dot, attempt: u32 },
}

#[derive(Debug)]
struct Queued {
    t: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.t, self.seq) == (other.t, other.seq)
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.t, other.seq).cmp(&(self.t, self.seq))
    }
}

struct Node {
    process: Process,
    exec: ExecGraph,
    app: App,
    alive: bool,
    seen: BTreeSet<Dot>,
    batches: usize,
    /// Outstanding closed-loop commands submitted here, by dot.
    client_of: BTreeMap<Dot, u32>,
    issued: BTreeMap<u32, u64>,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    latency: Vec<Vec<u64>>,
    nodes: Vec<Node>,
    queue: BinaryHeap<Queued>,
    next_seq: u64,
    next_send: u64,
    now: u64,
    trace: Trace,
    net_rng: ChaCha8Rng,
    rec_rng: ChaCha8Rng,
    workload: Workload,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs one simulation to quiescence or the horizon.
pub fn run(cfg: &SimConfig) -> Result<Trace, ConfigError> {
    cfg.validate()?;
    let latency = cfg.latency.matrix(cfg.n);
    let nodes = (1..=cfg.n)
        .map(|i| {
            let id = ProcessId(i);
            Node {
                process: Process::new(id, cfg.n, cfg.f, &latency[id.index()], cfg.protocol),
                exec: ExecGraph::new(),
                app: App::new(id),
                alive: true,
                seen: BTreeSet::new(),
                batches: 0,
                client_of: BTreeMap::new(),
                issued: BTreeMap::new(),
            }
        })
        .collect();
    let mut sim = Sim {
        cfg,
        latency,
        nodes,
        queue: BinaryHeap::new(),
        next_seq: 0,
        next_send: 0,
        now: 0,
        trace: Trace::default(),
        net_rng: stream(cfg.seed, NETWORK_STREAM),
        rec_rng: stream(cfg.seed, RECOVERY_STREAM),
        workload: Workload::new(cfg.workload.clone(), stream(cfg.seed, WORKLOAD_STREAM)),
    };
    sim.trace.push(0, Event::Meta { config: cfg.clone() });
    for c in &cfg.crashes {
        sim.schedule(c.at, Ev::Crash(ProcessId(c.process)));
    }
    match &cfg.workload.script {
        Some(script) => {
            for (i, s) in script.iter().enumerate() {
                sim.schedule(s.at, Ev::Scripted(i));
            }
        }
        None => {
            for p in 1..=cfg.n {
                for c in 0..cfg.workload.clients_per_process {
                    sim.schedule(0, Ev::ClientNext { proc: ProcessId(p), client: c });
                }
            }
        }
    }
    let outcome = sim.run_loop();
    let end = sim.now;
    sim.trace.push(end, Event::End { outcome });
    Ok(sim.trace)
}

impl Sim<'_> {
    fn schedule(&mut self, t: u64, ev: Ev) {
        self.queue.push(Queued { t, seq: self.next_seq, ev });
        self.next_seq += 1;
    }

    fn node(&mut self, p: ProcessId) -> &mut Node {
        &mut self.nodes[p.index()]
    }

    fn run_loop(&mut self) -> RunOutcome {
        while let Some(q) = self.queue.pop() {
            if q.t > self.cfg.horizon {
                self.now = self.cfg.horizon;
                return RunOutcome::HorizonReached;
            }
            self.now = q.t;
            match q.ev {
                Ev::Crash(p) => {
                    let node = self.node(p);
                    if node.alive {
                        node.alive = false;
                        node.process.crash();
                        self.trace.push(self.now, Event::Crash { proc: p });
                    }
                }
                Ev::Deliver { id, from, to, msg } => {
                    if !self.nodes[to.index()].alive {
                        continue;
                    }
                    self.trace.push(self.now, Event::Deliver { id, from, to });
                    self.observe(to, &msg);
                    let out = self.node(to).process.handle(from, msg);
                    self.absorb(to, out);
                }
                Ev::ClientNext { proc, client } => self.client_next(proc, client),
                Ev::Scripted(i) => {
                    let s = self.cfg.workload.script.as_ref().expect("scripted event")[i].clone();
                    let id = CommandId { caller: ProcessId(s.process), client: 0, seq: i as u64 + 1 };
                    self.invoke(ProcessId(s.process), id, s.op);
                }
                Ev::RecoveryTimer { proc, dot, attempt } => self.fire_timer(proc, dot, attempt),
            }
        }
        let stuck = self.nodes.iter().any(|node| {
            node.alive && node.seen.iter().any(|d| !node.process.phase(d).is_committed_or_executed())
        });
        if stuck {
            RunOutcome::Livelock
        } else {
            RunOutcome::Quiescent
        }
    }

    fn client_next(&mut self, proc: ProcessId, client: u32) {
        let limit = self.cfg.workload.commands_per_client as u64;
        let node = self.node(proc);
        if !node.alive {
            return;
        }
        let issued = node.issued.entry(client).or_insert(0);
        if *issued >= limit {
            return;
        }
        *issued += 1;
        let seq = *issued;
        let op = self.workload.next_op(proc.0, client, seq);
        let id = CommandId { caller: proc, client, seq };
        if let Some(dot) = self.invoke(proc, id, op) {
            self.node(proc).client_of.insert(dot, client);
        }
    }

    fn invoke(&mut self, proc: ProcessId, id: CommandId, op: Op) -> Option<Dot> {
        if !self.nodes[proc.index()].alive {
            return None;
        }
        let cmd = Command::App(AppCommand { id, op: op.clone() });
        let node = self.node(proc);
        node.app.invoke(&cmd).expect("command ids are unique");
        let (dot, out) = node.process.submit(cmd).expect("alive process accepts app commands");
        self.trace.push(self.now, Event::Invoke { proc, id, dot, op });
        self.see(proc, dot);
        self.absorb(proc, out);
        Some(dot)
    }

    /// Arms a recovery timer the first time `proc` hears of a dot.
    fn observe(&mut self, proc: ProcessId, msg: &Message) {
        self.see(proc, msg.dot());
        let deps = match msg {
            Message::MCollect { past, .. } => Some(past),
            Message::MCollectAck { deps, .. }
            | Message::MConsensus { deps, .. }
            | Message::MCommit { deps, .. }
            | Message::MRecoverAck { deps, .. } => Some(deps),
            _ => None,
        };
        for d in deps.into_iter().flatten() {
            self.see(proc, *d);
        }
    }

    fn see(&mut self, proc: ProcessId, dot: Dot) {
        let node = self.node(proc);
        if node.process.phase(&dot).is_committed_or_executed() || !node.seen.insert(dot) {
            return;
        }
        self.arm(proc, dot, 0);
    }

    /// Processes closer after the coordinator (mod n) go first, so a live
    /// coordinator normally handles its own identifiers.
    fn rank(&self, proc: ProcessId, dot: Dot) -> u64 {
        let n = self.cfg.n;
        let dist = |p: u32| (p + n - dot.proc.0) % n;
        let mine = dist(proc.0);
        (1..=n)
            .filter(|&q| self.nodes[(q - 1) as usize].alive && dist(q) < mine)
            .count() as u64
    }

    fn arm(&mut self, proc: ProcessId, dot: Dot, attempt: u32) {
        let timeout = self.cfg.recovery_timeout;
        let base = (timeout * (1 + self.rank(proc, dot))) << attempt.min(MAX_BACKOFF_EXP);
        let jitter = self.rec_rng.gen_range(0..=timeout / 4);
        self.schedule(self.now + base + jitter, Ev::RecoveryTimer { proc, dot, attempt });
    }

    fn fire_timer(&mut self, proc: ProcessId, dot: Dot, attempt: u32) {
        let node = self.node(proc);
        if !node.alive || node.process.phase(&dot).is_committed_or_executed() {
            return;
        }
        let out = node.process.recover(dot);
        self.absorb(proc, out);
        if !self.nodes[proc.index()].process.phase(&dot).is_committed_or_executed() {
            self.arm(proc, dot, attempt + 1);
        }
    }

    fn send(&mut self, from: ProcessId, to: ProcessId, msg: Message) {
        let id = self.next_send;
        self.next_send += 1;
        let base = self.latency[from.index()][to.index()];
        let delay = base + self.net_rng.gen_range(0..=self.cfg.jitter);
        self.trace.push(self.now, Event::Send { id, from, to, msg: msg.clone() });
        self.schedule(self.now + delay, Ev::Deliver { id, from, to, msg });
    }

    fn absorb(&mut self, proc: ProcessId, out: HandlerOutput) {
        for note in out.notes {
            let event = match note {
                Note::Collected { dot, acks, fast, matching, read_optimized, union, proposal } => {
                    Event::CollectDecision { proc, dot, acks, fast, matching, read_optimized, union, proposal }
                }
                Note::Decided { dot, path, ballot, deps, .. } => Event::Decide { proc, dot, path, ballot, deps },
                Note::RecoveryStarted { dot, ballot } => Event::RecoveryStart { proc, dot, ballot },
            };
            self.trace.push(self.now, event);
        }
        for o in out.outbound {
            match o.to {
                Destination::To(q) => self.send(proc, q, o.msg),
                Destination::Broadcast => {
                    for q in (1..=self.cfg.n).map(ProcessId).filter(|&q| q != proc) {
                        self.send(proc, q, o.msg.clone());
                    }
                }
            }
        }
        if out.committed.is_empty() {
            return;
        }
        for c in out.committed {
            self.trace.push(self.now, Event::Commit { proc, dot: c.dot, cmd: c.cmd.clone(), deps: c.deps.clone() });
            self.node(proc)
                .exec
                .add_committed(c.dot, c.cmd, c.deps)
                .expect("a process commits each dot once");
        }
        self.execute(proc);
    }

    fn execute(&mut self, proc: ProcessId) {
        let batches = self.node(proc).exec.try_execute();
        for batch in batches {
            let index = {
                let node = self.node(proc);
                node.batches += 1;
                node.batches - 1
            };
            for (dot, cmd) in batch {
                self.node(proc).process.mark_executed(&dot);
                self.trace.push(self.now, Event::Execute { proc, batch: index, dot, noop: cmd.is_noop() });
                let node = self.node(proc);
                let client = node.client_of.remove(&dot);
                let response = match &cmd {
                    Command::App(app) => node.app.on_deliver(app).map(|r| (app.id, r)),
                    Command::Noop => None,
                };
                if let Some((id, response)) = response {
                    self.trace.push(self.now, Event::Response { proc, id, response });
                }
                // A command replaced by a noop never answers; its client
                // moves on with a fresh command.
                if let Some(client) = client {
                    self.schedule(self.now, Ev::ClientNext { proc, client });
                }
            }
        }
    }
}
