use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use atlas::sim::{SimConfig, Trace};
use atlas::{check_all, run_checked, RunSummary};

const EXIT_OK: u8 = 0;
const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "atlas", version, about = "Simulate, sweep and check leaderless SMR runs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one configuration; writes trace.jsonl and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        /// Allow more than f crashes (safety-only testing).
        #[arg(long)]
        force_crashes: bool,
    },
    /// Average fast-path ratio and commit latency over a parameter grid.
    Sweep {
        /// Base configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.5, 1.0])]
        rates: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2])]
        f: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = [5])]
        n: Vec<u32>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every checker on a trace file.
    Check { trace: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run { config, out, seed, horizon, force_crashes } => {
            cmd_run(&config, &out, seed, horizon, force_crashes)
        }
        Cmd::Sweep { config, seeds, rates, f, n, out } => cmd_sweep(config.as_deref(), seeds, &rates, &f, &n, out.as_deref()),
        Cmd::Check { trace } => cmd_check(&trace),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn load_config(path: &Path) -> Result<SimConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_run(path: &Path, out: &Path, seed: Option<u64>, horizon: Option<u64>, force: bool) -> Result<u8, String> {
    let mut cfg = load_config(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(h) = horizon {
        cfg.horizon = h;
    }
    cfg.allow_excess_crashes |= force;
    let (trace, summary) = run_checked(&cfg).map_err(|e| e.to_string())?;
    fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let trace_path = out.join("trace.jsonl");
    let file = fs::File::create(&trace_path).map_err(|e| format!("{}: {e}", trace_path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    trace.write_jsonl(&mut w).and_then(|_| w.flush()).map_err(|e| e.to_string())?;
    let summary_json = serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?;
    fs::write(out.join("summary.json"), summary_json + "\n").map_err(|e| e.to_string())?;
    println!(
        "outcome={:?} submitted={} executed={} fast_path_ratio={:.3} matching_ratio={:.3} mean_latency_ms={:.1} recoveries={}",
        summary.outcome,
        summary.commands_submitted,
        summary.commands_executed,
        summary.fast_path_ratio,
        summary.matching_ratio,
        summary.commit_latency.mean,
        summary.recovery_count
    );
    report_failures(&summary.checks);
    Ok(if summary.checks.all_passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn report_failures(report: &atlas::CheckReport) {
    for (name, verdict) in report.failures() {
        eprintln!("check {name} failed: {}", serde_json::to_string(verdict).unwrap_or_default());
    }
}

struct Cell {
    n: u32,
    f: u32,
    rho: f64,
}

fn cmd_sweep(
    path: Option<&Path>,
    seeds: u64,
    rates: &[f64],
    fs_: &[u32],
    ns: &[u32],
    out: Option<&Path>,
) -> Result<u8, String> {
    let base = match path {
        Some(p) => load_config(p)?,
        None => SimConfig::default(),
    };
    let cells: Vec<Cell> = ns
        .iter()
        .flat_map(|&n| fs_.iter().filter(move |&&f| f >= 1 && f <= n.saturating_sub(1) / 2).map(move |&f| (n, f)))
        .flat_map(|(n, f)| rates.iter().map(move |&rho| Cell { n, f, rho }))
        .collect();
    if cells.is_empty() {
        return Err("no valid (n, f) pair in the grid".into());
    }
    let jobs: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| (0..seeds).map(move |s| (c, s))).collect();
    let results: Vec<Result<(usize, RunSummary), String>> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let cell = &cells[c];
            let mut cfg = base.clone();
            cfg.n = cell.n;
            cfg.f = cell.f;
            cfg.workload.conflict_rate = cell.rho;
            cfg.seed = base.seed.wrapping_add(s);
            cfg.crashes.retain(|c| c.process <= cell.n);
            run_checked(&cfg).map(|(_, summary)| (c, summary)).map_err(|e| e.to_string())
        })
        .collect();
    let mut per_cell: Vec<Vec<RunSummary>> = cells.iter().map(|_| Vec::new()).collect();
    for r in results {
        let (c, summary) = r?;
        per_cell[c].push(summary);
    }
    let mut csv = String::from("n,f,rho,seeds,fast_path_ratio,matching_ratio,mean_commit_latency_ms,recoveries,checks_passed\n");
    let mut all_passed = true;
    for (cell, runs) in cells.iter().zip(&per_cell) {
        let k = runs.len() as f64;
        let mean = |g: &dyn Fn(&RunSummary) -> f64| runs.iter().map(g).sum::<f64>() / k;
        let passed = runs.iter().all(|r| r.checks.all_passed());
        all_passed &= passed;
        csv.push_str(&format!(
            "{},{},{},{},{:.4},{:.4},{:.2},{},{}\n",
            cell.n,
            cell.f,
            cell.rho,
            runs.len(),
            mean(&|r| r.fast_path_ratio),
            mean(&|r| r.matching_ratio),
            mean(&|r| r.commit_latency.mean),
            runs.iter().map(|r| r.recovery_count).sum::<usize>(),
            passed
        ));
    }
    match out {
        Some(p) => fs::write(p, csv).map_err(|e| format!("{}: {e}", p.display()))?,
        None => print!("{csv}"),
    }
    Ok(if all_passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn cmd_check(path: &Path) -> Result<u8, String> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let trace = Trace::read_jsonl(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))?;
    let report = check_all(&trace);
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
    report_failures(&report);
    Ok(if report.all_passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
}
