use thiserror::Error;

use crate::types::{Dot, ProcessId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed dot `{0}`, expected p<proc>-<seq>")]
    Dot(String),
}

/// Errors surfaced by the protocol state machine.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("cannot submit a noop")]
    NoopSubmission,
    #[error("process {0} has crashed")]
    Crashed(ProcessId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecutorError {
    #[error("{0} was already committed to the executor")]
    DuplicateCommit(Dot),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AppError {
    #[error("command {0} was already invoked")]
    DuplicateInvocation(crate::types::CommandId),
    #[error("noop cannot be invoked")]
    NoopInvocation,
}

/// A `SimConfig` field that failed validation.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError { field: field.into(), reason: reason.into() }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace is empty")]
    Empty,
    #[error("trace does not start with a meta record")]
    MissingMeta,
    #[error("trace does not end with an end record (truncated?)")]
    MissingEnd,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
