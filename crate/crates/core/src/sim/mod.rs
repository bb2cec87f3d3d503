//! Deterministic discrete-event simulation of a cluster.

pub mod config;
pub mod runner;
pub mod trace;
pub mod workload;

pub use config::{CrashSpec, LatencySpec, ScriptedCommand, SimConfig, WorkloadConfig};
pub use runner::run;
pub use trace::{Event, RunOutcome, Trace, TraceLine};
