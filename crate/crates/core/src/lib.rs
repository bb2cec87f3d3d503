//! Leaderless state-machine replication with dependency-based ordering,
//! flexible fast-path quorums, a deterministic simulator and trace checkers.
//!
//! The usual entry point is [`run_checked`]: simulate a configuration, check
//! the resulting trace and summarize it.

pub mod app;
pub mod check;
pub mod error;
pub mod executor;
pub mod protocol;
pub mod sim;
pub mod summary;
pub mod types;

pub use check::{check_all, CheckReport, Verdict};
pub use error::ConfigError;
pub use sim::{run, SimConfig, Trace};
pub use summary::RunSummary;

/// Simulates `cfg`, runs every checker on the trace and summarizes it.
pub fn run_checked(cfg: &SimConfig) -> Result<(Trace, RunSummary), ConfigError> {
    let trace = run(cfg)?;
    let report = check_all(&trace);
    let summary = RunSummary::new(&trace, report);
    Ok((trace, summary))
}
