//! Identifiers, commands, ballots and protocol messages shared by every
//! other module.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ParseError;

/// A process identifier in `1..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type Quorum = BTreeSet<ProcessId>;
pub type DepSet = BTreeSet<Dot>;

/// Globally unique command identifier: the submitting process and its
/// per-process submission counter (starting at 1).
///
/// Dots are totally ordered by `(seq, proc)`. Batches are executed in this
/// order, so it must be identical everywhere; it is a pure function of the
/// two fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dot {
    pub proc: ProcessId,
    pub seq: u64,
}

impl Dot {
    pub fn new(proc: u32, seq: u64) -> Self {
        Dot { proc: ProcessId(proc), seq }
    }
}

impl Ord for Dot {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.seq, self.proc).cmp(&(other.seq, other.proc))
    }
}

impl PartialOrd for Dot {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The fixed total order on identifiers used inside execution batches.
pub fn dot_order(a: &Dot, b: &Dot) -> Ordering {
    a.cmp(b)
}

impl fmt::Display for Dot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}-{}", self.proc.0, self.seq)
    }
}

impl FromStr for Dot {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseError::Dot(s.to_string());
        let rest = s.strip_prefix('p').ok_or_else(bad)?;
        let (proc, seq) = rest.split_once('-').ok_or_else(bad)?;
        let proc: u32 = proc.parse().map_err(|_| bad())?;
        let seq: u64 = seq.parse().map_err(|_| bad())?;
        if proc == 0 || seq == 0 {
            return Err(bad());
        }
        Ok(Dot::new(proc, seq))
    }
}

impl Serialize for Dot {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Dot {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! hex_bytes {
    ($name:ident) => {
        /// Opaque byte string, hex-encoded in JSON.
        #[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub Vec<u8>);

        impl $name {
            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.as_bytes().to_vec())
            }
        }

        impl From<Vec<u8>> for $name {
            fn from(v: Vec<u8>) -> Self {
                $name(v)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match std::str::from_utf8(&self.0) {
                    Ok(s) if s.chars().all(|c| c.is_ascii_graphic()) => write!(f, "{s}"),
                    _ => write!(f, "0x{}", hex::encode(&self.0)),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&hex::encode(&self.0))
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                hex::decode(&s).map($name).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_bytes!(Key);
hex_bytes!(Value);

/// Key-value operation carried by an application command.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Op {
    Get { key: Key },
    Put { key: Key, value: Value },
}

impl Op {
    pub fn key(&self) -> &Key {
        match self {
            Op::Get { key } | Op::Put { key, .. } => key,
        }
    }

    pub fn is_write(&self) -> bool {
        matches!(self, Op::Put { .. })
    }
}

/// Tags every submitted command so that no two invocations are equal, even
/// when they carry the same operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CommandId {
    pub caller: ProcessId,
    pub client: u32,
    pub seq: u64,
}

impl fmt::Display for CommandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}.{}.{}", self.caller.0, self.client, self.seq)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AppCommand {
    pub id: CommandId,
    pub op: Op,
}

/// A replicated command. `Noop` replaces a command whose payload could not
/// be recovered; it conflicts with everything and is never delivered to the
/// application.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    #[default]
    Noop,
    App(AppCommand),
}

impl Command {
    pub fn get(id: CommandId, key: impl Into<Key>) -> Self {
        Command::App(AppCommand { id, op: Op::Get { key: key.into() } })
    }

    pub fn put(id: CommandId, key: impl Into<Key>, value: impl Into<Value>) -> Self {
        Command::App(AppCommand {
            id,
            op: Op::Put { key: key.into(), value: value.into() },
        })
    }

    pub fn is_noop(&self) -> bool {
        matches!(self, Command::Noop)
    }

    pub fn app(&self) -> Option<&AppCommand> {
        match self {
            Command::Noop => None,
            Command::App(app) => Some(app),
        }
    }

    pub fn id(&self) -> Option<CommandId> {
        self.app().map(|a| a.id)
    }

    pub fn caller(&self) -> Option<ProcessId> {
        self.app().map(|a| a.id.caller)
    }

    pub fn key(&self) -> Option<&Key> {
        self.app().map(|a| a.op.key())
    }

    /// Membership in the class of reads whose conflicts are transitive:
    /// exactly the single-key `Get` commands.
    pub fn is_transitive_read(&self) -> bool {
        matches!(self, Command::App(AppCommand { op: Op::Get { .. }, .. }))
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Noop => write!(f, "noop"),
            Command::App(AppCommand { id, op: Op::Get { key } }) => write!(f, "{id}:get({key})"),
            Command::App(AppCommand { id, op: Op::Put { key, value } }) => {
                write!(f, "{id}:put({key},{value})")
            }
        }
    }
}

/// How application commands are compared for conflicts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictMode {
    /// Commands on the same key always conflict.
    #[default]
    Coarse,
    /// Commands on the same key conflict unless both are reads.
    ReadAware,
}

/// Whether `c` and `d` fail to commute. Symmetric; `Noop` conflicts with
/// every command, itself included.
pub fn conflict(c: &Command, d: &Command, mode: ConflictMode) -> bool {
    match (c, d) {
        (Command::Noop, _) | (_, Command::Noop) => true,
        (Command::App(a), Command::App(b)) => {
            if a.op.key() != b.op.key() {
                return false;
            }
            match mode {
                ConflictMode::Coarse => true,
                ConflictMode::ReadAware => a.op.is_write() || b.op.is_write(),
            }
        }
    }
}

/// Paxos ballot number. Ballot `i` in `1..=n` belongs to initial
/// coordinator `i`; larger ballots are allocated round-robin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ballot(pub u64);

impl Ballot {
    pub const ZERO: Ballot = Ballot(0);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// The process owning this ballot in a cluster of `n`; `None` for 0.
    pub fn owner(self, n: u32) -> Option<ProcessId> {
        if self.0 == 0 {
            None
        } else {
            Some(ProcessId(((self.0 - 1) % n as u64) as u32 + 1))
        }
    }
}

impl fmt::Display for Ballot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The smallest ballot owned by `i` that is above both `current` and `n`:
/// `i + n * (current / n + 1)`.
pub fn next_ballot(i: ProcessId, current: Ballot, n: u32) -> Ballot {
    let n = n as u64;
    Ballot(i.0 as u64 + n * (current.0 / n + 1))
}

/// Progress of an identifier at one process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Start,
    Collect,
    Recovering,
    Committed,
    Executed,
}

impl Phase {
    pub fn can_transition_to(self, next: Phase) -> bool {
        use Phase::*;
        matches!(
            (self, next),
            (Start, Collect)
                | (Start, Recovering)
                | (Start, Committed)
                | (Collect, Recovering)
                | (Collect, Committed)
                | (Recovering, Recovering)
                | (Recovering, Committed)
                | (Committed, Executed)
        )
    }

    pub fn is_committed_or_executed(self) -> bool {
        matches!(self, Phase::Committed | Phase::Executed)
    }
}

/// The protocol message grammar. Every message names the identifier it
/// concerns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    MCollect { dot: Dot, cmd: Command, past: DepSet, quorum: Quorum },
    MCollectAck { dot: Dot, deps: DepSet },
    MConsensus { dot: Dot, cmd: Command, deps: DepSet, ballot: Ballot },
    MConsensusAck { dot: Dot, ballot: Ballot },
    MCommit { dot: Dot, cmd: Command, deps: DepSet },
    MRecover { dot: Dot, cmd: Command, ballot: Ballot },
    MRecoverAck {
        dot: Dot,
        cmd: Command,
        deps: DepSet,
        initial_quorum: Quorum,
        accepted_ballot: Ballot,
        ballot: Ballot,
    },
}

impl Message {
    pub fn dot(&self) -> Dot {
        match self {
            Message::MCollect { dot, .. }
            | Message::MCollectAck { dot, .. }
            | Message::MConsensus { dot, .. }
            | Message::MConsensusAck { dot, .. }
            | Message::MCommit { dot, .. }
            | Message::MRecover { dot, .. }
            | Message::MRecoverAck { dot, .. } => *dot,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::MCollect { .. } => "MCollect",
            Message::MCollectAck { .. } => "MCollectAck",
            Message::MConsensus { .. } => "MConsensus",
            Message::MConsensusAck { .. } => "MConsensusAck",
            Message::MCommit { .. } => "MCommit",
            Message::MRecover { .. } => "MRecover",
            Message::MRecoverAck { .. } => "MRecoverAck",
        }
    }
}
