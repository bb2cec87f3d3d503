//! The run trace and its JSON-lines encoding.
//!
//! The first line is a `meta` record carrying the full configuration and the
//! last is an `end` record with the run outcome. Every line has the virtual
//! time `t` followed by an `event` tag.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::app::Response;
use crate::error::TraceError;
use crate::protocol::CommitPath;
use crate::sim::config::SimConfig;
use crate::types::{Ballot, Command, CommandId, DepSet, Dot, Message, Op, ProcessId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    /// No events left and nothing known is uncommitted at alive processes.
    Quiescent,
    /// Events remained past the horizon.
    HorizonReached,
    /// No events left while some alive process still waits on a command.
    Livelock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Meta { config: SimConfig },
    Send { id: u64, from: ProcessId, to: ProcessId, msg: Message },
    Deliver { id: u64, from: ProcessId, to: ProcessId },
    Crash { proc: ProcessId },
    Invoke { proc: ProcessId, id: CommandId, dot: Dot, op: Op },
    Response { proc: ProcessId, id: CommandId, response: Response },
    CollectDecision {
        proc: ProcessId,
        dot: Dot,
        /// Written as `[[proc, deps], ...]`.
        #[serde(with = "pairs")]
        acks: BTreeMap<ProcessId, DepSet>,
        fast: bool,
        matching: bool,
        read_optimized: bool,
        union: DepSet,
        proposal: Option<DepSet>,
    },
    Decide { proc: ProcessId, dot: Dot, path: CommitPath, ballot: Ballot, deps: DepSet },
    Commit { proc: ProcessId, dot: Dot, cmd: Command, deps: DepSet },
    Execute { proc: ProcessId, batch: usize, dot: Dot, noop: bool },
    RecoveryStart { proc: ProcessId, dot: Dot, ballot: Ballot },
    End { outcome: RunOutcome },
}

// Flattened enums buffer their content, which loses the ability to read
// integer map keys back from JSON strings.
mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serializer};

    use crate::types::{DepSet, ProcessId};

    pub fn serialize<S: Serializer>(m: &BTreeMap<ProcessId, DepSet>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<ProcessId, DepSet>, D::Error> {
        Ok(Vec::<(ProcessId, DepSet)>::deserialize(d)?.into_iter().collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub t: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub lines: Vec<TraceLine>,
}

impl Trace {
    pub fn push(&mut self, t: u64, event: Event) {
        debug_assert!(self.lines.last().is_none_or(|l| l.t <= t));
        self.lines.push(TraceLine { t, event });
    }

    pub fn config(&self) -> Option<&SimConfig> {
        match self.lines.first().map(|l| &l.event) {
            Some(Event::Meta { config }) => Some(config),
            _ => None,
        }
    }

    pub fn outcome(&self) -> Option<RunOutcome> {
        match self.lines.last().map(|l| &l.event) {
            Some(Event::End { outcome }) => Some(*outcome),
            _ => None,
        }
    }

    pub fn events(&self) -> impl Iterator<Item = (usize, u64, &Event)> {
        self.lines.iter().enumerate().map(|(i, l)| (i, l.t, &l.event))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for line in &self.lines {
            serde_json::to_writer(&mut w, line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Parses a trace; line numbers in errors are 1-based.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut lines = Vec::new();
        for (i, raw) in r.lines().enumerate() {
            let raw = raw?;
            if raw.trim().is_empty() {
                continue;
            }
            let line: TraceLine = serde_json::from_str(&raw)
                .map_err(|source| TraceError::Malformed { line: i + 1, source })?;
            lines.push(line);
        }
        let trace = Trace { lines };
        if trace.lines.is_empty() {
            return Err(TraceError::Empty);
        }
        if trace.config().is_none() {
            return Err(TraceError::MissingMeta);
        }
        if trace.outcome().is_none() {
            return Err(TraceError::MissingEnd);
        }
        Ok(trace)
    }

    pub fn from_jsonl(s: &str) -> Result<Self, TraceError> {
        Self::read_jsonl(s.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        let mut t = Trace::default();
        t.push(0, Event::Meta { config: SimConfig::default() });
        t.push(
            0,
            Event::Send {
                id: 0,
                from: ProcessId(1),
                to: ProcessId(2),
                msg: Message::MCollectAck { dot: Dot::new(1, 1), deps: [Dot::new(2, 1)].into_iter().collect() },
            },
        );
        t.push(3, Event::Deliver { id: 0, from: ProcessId(1), to: ProcessId(2) });
        t.push(3, Event::End { outcome: RunOutcome::Quiescent });
        t
    }

    #[test]
    fn roundtrip() {
        let t = sample();
        let s = t.to_jsonl();
        assert_eq!(Trace::from_jsonl(&s).unwrap(), t);
        let second = s.lines().nth(1).unwrap();
        assert!(second.starts_with(r#"{"t":0,"event":"send","id":0"#), "{second}");
    }

    #[test]
    fn malformed_line_reported() {
        let s = sample().to_jsonl();
        let mut lines: Vec<&str> = s.lines().collect();
        lines[2] = "{\"t\":3,\"event\":\"deliv";
        match Trace::from_jsonl(&lines.join("\n")) {
            Err(TraceError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_trace_rejected() {
        let s = sample().to_jsonl();
        let cut: Vec<&str> = s.lines().take(3).collect();
        assert!(matches!(Trace::from_jsonl(&cut.join("\n")), Err(TraceError::MissingEnd)));
        assert!(matches!(Trace::from_jsonl(""), Err(TraceError::Empty)));
        let no_meta: Vec<&str> = s.lines().skip(1).collect();
        assert!(matches!(Trace::from_jsonl(&no_meta.join("\n")), Err(TraceError::MissingMeta)));
    }
}
