//! The replicated key-value store and the wrapper that turns ordered
//! delivery into client responses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::AppError;
use crate::types::{AppCommand, Command, CommandId, Key, Op, ProcessId, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Ack,
    /// `None` for a key that was never written.
    Read(Option<Value>),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvState {
    store: BTreeMap<Key, Value>,
}

impl KvState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &Key) -> Option<&Value> {
        self.store.get(key)
    }

    pub fn apply(&mut self, op: &Op) -> Response {
        match op {
            Op::Get { key } => Response::Read(self.store.get(key).cloned()),
            Op::Put { key, value } => {
                self.store.insert(key.clone(), value.clone());
                Response::Ack
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pending {
    InFlight,
    Done(Response),
}

/// One process's application replica.
#[derive(Clone, Debug)]
pub struct App {
    proc: ProcessId,
    state: KvState,
    pending: BTreeMap<CommandId, Pending>,
    log: Vec<CommandId>,
    applied: BTreeMap<CommandId, usize>,
}

impl App {
    pub fn new(proc: ProcessId) -> Self {
        App { proc, state: KvState::new(), pending: BTreeMap::new(), log: Vec::new(), applied: BTreeMap::new() }
    }

    pub fn state(&self) -> &KvState {
        &self.state
    }

    /// Applied commands, in order.
    pub fn log(&self) -> &[CommandId] {
        &self.log
    }

    /// Records `cmd` as in flight. The caller submits it to the protocol.
    pub fn invoke(&mut self, cmd: &Command) -> Result<(), AppError> {
        let id = cmd.id().ok_or(AppError::NoopInvocation)?;
        if self.pending.contains_key(&id) {
            return Err(AppError::DuplicateInvocation(id));
        }
        self.pending.insert(id, Pending::InFlight);
        Ok(())
    }

    /// Applies a delivered command. Returns the response when this process
    /// invoked it. A command delivered twice is applied once.
    pub fn on_deliver(&mut self, cmd: &AppCommand) -> Option<Response> {
        if self.applied.contains_key(&cmd.id) {
            return None;
        }
        self.applied.insert(cmd.id, self.log.len());
        self.log.push(cmd.id);
        let response = self.state.apply(&cmd.op);
        if cmd.id.caller != self.proc {
            return None;
        }
        match self.pending.get_mut(&cmd.id) {
            Some(p @ Pending::InFlight) => {
                *p = Pending::Done(response.clone());
                Some(response)
            }
            _ => None,
        }
    }

    pub fn poll(&self, id: &CommandId) -> Option<&Pending> {
        self.pending.get(id)
    }
}
