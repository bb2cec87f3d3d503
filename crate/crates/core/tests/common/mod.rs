#![allow(dead_code)]

use atlas::app::Response;
use atlas::sim::{Event, RunOutcome, SimConfig, Trace};
use atlas::types::{AppCommand, Command, CommandId, DepSet, Dot, Op, ProcessId};

pub fn p(i: u32) -> ProcessId {
    ProcessId(i)
}

pub fn dot(proc: u32, seq: u64) -> Dot {
    Dot::new(proc, seq)
}

pub fn deps(ds: &[Dot]) -> DepSet {
    ds.iter().copied().collect()
}

pub fn put_op(key: &str, value: &str) -> Op {
    Op::Put { key: key.into(), value: value.into() }
}

pub fn get_op(key: &str) -> Op {
    Op::Get { key: key.into() }
}

/// Builds hand-made traces for negative controls.
pub struct Forge {
    trace: Trace,
    t: u64,
}

impl Forge {
    pub fn new(n: u32, f: u32) -> Self {
        let mut trace = Trace::default();
        trace.push(0, Event::Meta { config: SimConfig { n, f, ..Default::default() } });
        Forge { trace, t: 0 }
    }

    pub fn with_config(config: SimConfig) -> Self {
        let mut trace = Trace::default();
        trace.push(0, Event::Meta { config });
        Forge { trace, t: 0 }
    }

    pub fn event(&mut self, e: Event) -> &mut Self {
        self.t += 1;
        self.trace.push(self.t, e);
        self
    }

    /// Invokes `op` at the dot's process; returns the command.
    pub fn invoke(&mut self, d: Dot, op: Op) -> Command {
        let id = CommandId { caller: d.proc, client: 0, seq: d.seq };
        self.event(Event::Invoke { proc: d.proc, id, dot: d, op: op.clone() });
        Command::App(AppCommand { id, op })
    }

    pub fn respond(&mut self, cmd: &Command, response: Response) -> &mut Self {
        let id = cmd.id().expect("app command");
        self.event(Event::Response { proc: id.caller, id, response })
    }

    pub fn commit(&mut self, proc: u32, d: Dot, cmd: &Command, ds: &[Dot]) -> &mut Self {
        self.event(Event::Commit { proc: p(proc), dot: d, cmd: cmd.clone(), deps: deps(ds) })
    }

    pub fn commit_all(&mut self, n: u32, d: Dot, cmd: &Command, ds: &[Dot]) -> &mut Self {
        for i in 1..=n {
            self.commit(i, d, cmd, ds);
        }
        self
    }

    pub fn execute(&mut self, proc: u32, batch: usize, d: Dot) -> &mut Self {
        self.event(Event::Execute { proc: p(proc), batch, dot: d, noop: false })
    }

    pub fn finish(mut self) -> Trace {
        self.t += 1;
        self.trace.push(self.t, Event::End { outcome: RunOutcome::Quiescent });
        self.trace
    }
}
