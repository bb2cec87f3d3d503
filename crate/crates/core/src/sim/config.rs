use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::protocol::ProtocolConfig;
use crate::types::Op;

/// Base one-way delays between processes, in virtual milliseconds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencySpec {
    Uniform { ms: u64 },
    /// Processes `1..=ceil(n/2)` form one region, the rest another.
    TwoRegion { local: u64, remote: u64 },
    /// Five synthetic sites; process `p` sits at site `(p - 1) % 5`.
    Planet,
    Matrix { rows: Vec<Vec<u64>> },
}

impl Default for LatencySpec {
    fn default() -> Self {
        LatencySpec::Uniform { ms: 50 }
    }
}

const PLANET: [[u64; 5]; 5] = [
    [0, 40, 75, 110, 150],
    [40, 0, 45, 90, 130],
    [75, 45, 0, 60, 100],
    [110, 90, 60, 0, 70],
    [150, 130, 100, 70, 0],
];
const PLANET_SAME_SITE: u64 = 2;

impl LatencySpec {
    pub fn matrix(&self, n: u32) -> Vec<Vec<u64>> {
        let n = n as usize;
        let cell = |i: usize, j: usize| -> u64 {
            if i == j {
                return 0;
            }
            match self {
                LatencySpec::Uniform { ms } => *ms,
                LatencySpec::TwoRegion { local, remote } => {
                    let half = n.div_ceil(2);
                    if (i < half) == (j < half) {
                        *local
                    } else {
                        *remote
                    }
                }
                LatencySpec::Planet => {
                    let d = PLANET[i % 5][j % 5];
                    if d == 0 {
                        PLANET_SAME_SITE
                    } else {
                        d
                    }
                }
                LatencySpec::Matrix { rows } => rows[i][j],
            }
        };
        (0..n).map(|i| (0..n).map(|j| cell(i, j)).collect()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashSpec {
    pub process: u32,
    pub at: u64,
}

/// A command submitted at a fixed time instead of by a closed-loop client.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedCommand {
    pub at: u64,
    pub process: u32,
    pub op: Op,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadConfig {
    pub clients_per_process: u32,
    pub commands_per_client: u32,
    /// Probability of using the shared key `"0"`.
    pub conflict_rate: f64,
    pub read_ratio: f64,
    pub payload_bytes: usize,
    /// When present, replaces the closed-loop clients.
    pub script: Option<Vec<ScriptedCommand>>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            clients_per_process: 1,
            commands_per_client: 20,
            conflict_rate: 0.1,
            read_ratio: 0.0,
            payload_bytes: 8,
            script: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: u32,
    pub f: u32,
    pub seed: u64,
    pub latency: LatencySpec,
    /// Each message takes its base delay plus a uniform draw from
    /// `0..=jitter`.
    pub jitter: u64,
    pub crashes: Vec<CrashSpec>,
    pub workload: WorkloadConfig,
    pub recovery_timeout: u64,
    /// Events scheduled after this virtual time are not processed.
    pub horizon: u64,
    pub protocol: ProtocolConfig,
    /// Allows more than `f` crashes, for safety-only testing.
    pub allow_excess_crashes: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 3,
            f: 1,
            seed: 0,
            latency: LatencySpec::default(),
            jitter: 10,
            crashes: Vec::new(),
            workload: WorkloadConfig::default(),
            recovery_timeout: 1_000,
            horizon: 600_000,
            protocol: ProtocolConfig::default(),
            allow_excess_crashes: false,
        }
    }
}

impl SimConfig {
    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig =
            serde_json::from_str(s).map_err(|e| ConfigError::new("<document>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 3 {
            return Err(ConfigError::new("n", "need at least 3 processes"));
        }
        let max_f = (self.n - 1) / 2;
        if self.f < 1 || self.f > max_f {
            return Err(ConfigError::new("f", format!("must satisfy 1 <= f <= {max_f} for n = {}", self.n)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.crashes {
            if c.process < 1 || c.process > self.n {
                return Err(ConfigError::new("crashes", format!("process {} out of range", c.process)));
            }
            if !seen.insert(c.process) {
                return Err(ConfigError::new("crashes", format!("process {} listed twice", c.process)));
            }
        }
        if self.crashes.len() > self.f as usize && !self.allow_excess_crashes {
            return Err(ConfigError::new(
                "crashes",
                format!("{} crashes exceed f = {}", self.crashes.len(), self.f),
            ));
        }
        if let LatencySpec::Matrix { rows } = &self.latency {
            if rows.len() != self.n as usize || rows.iter().any(|r| r.len() != self.n as usize) {
                return Err(ConfigError::new("latency", "matrix must be n x n"));
            }
        }
        let m = self.latency.matrix(self.n);
        for (i, row) in m.iter().enumerate() {
            for (j, &d) in row.iter().enumerate() {
                if i == j && d != 0 {
                    return Err(ConfigError::new("latency", "diagonal must be 0"));
                }
                if i != j && d == 0 {
                    return Err(ConfigError::new("latency", "off-diagonal delays must be positive"));
                }
            }
        }
        let w = &self.workload;
        if !(0.0..=1.0).contains(&w.conflict_rate) {
            return Err(ConfigError::new("workload.conflict_rate", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&w.read_ratio) {
            return Err(ConfigError::new("workload.read_ratio", "must be in [0, 1]"));
        }
        if let Some(script) = &w.script {
            if script.iter().any(|s| s.process < 1 || s.process > self.n) {
                return Err(ConfigError::new("workload.script", "process out of range"));
            }
        }
        if self.recovery_timeout == 0 {
            return Err(ConfigError::new("recovery_timeout", "must be positive"));
        }
        Ok(())
    }

    /// Largest base delay; used to convert latencies into delay units.
    pub fn max_base_delay(&self) -> u64 {
        self.latency.matrix(self.n).into_iter().flatten().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
        let cfg = SimConfig::from_json("{}").unwrap();
        assert_eq!(cfg, SimConfig::default());
    }

    #[test]
    fn f_bounds() {
        let bad = SimConfig { n: 5, f: 3, ..Default::default() };
        assert_eq!(bad.validate().unwrap_err().field, "f");
        let bad = SimConfig { n: 5, f: 0, ..Default::default() };
        assert_eq!(bad.validate().unwrap_err().field, "f");
        SimConfig { n: 7, f: 3, ..Default::default() }.validate().unwrap();
    }

    #[test]
    fn crash_bounds() {
        let crashes = vec![CrashSpec { process: 1, at: 0 }, CrashSpec { process: 2, at: 5 }];
        let cfg = SimConfig { crashes: crashes.clone(), ..Default::default() };
        assert_eq!(cfg.validate().unwrap_err().field, "crashes");
        SimConfig { crashes, allow_excess_crashes: true, ..Default::default() }.validate().unwrap();
    }

    #[test]
    fn latency_presets() {
        let m = LatencySpec::TwoRegion { local: 5, remote: 80 }.matrix(5);
        assert_eq!(m[0], vec![0, 5, 5, 80, 80]);
        assert_eq!(m[4], vec![80, 80, 80, 5, 0]);
        let m = LatencySpec::Planet.matrix(7);
        assert_eq!(m[0][5], PLANET_SAME_SITE);
        assert_eq!(m[1][2], 45);
        for (i, row) in m.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                assert_eq!(*d, m[j][i]);
                assert_eq!(*d == 0, i == j);
            }
        }
        let bad = SimConfig {
            latency: LatencySpec::Matrix { rows: vec![vec![0, 1, 1], vec![1, 0, 0], vec![1, 1, 0]] },
            ..Default::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "latency");
    }

    #[test]
    fn rates_bounded() {
        let mut cfg = SimConfig::default();
        cfg.workload.conflict_rate = 1.5;
        assert_eq!(cfg.validate().unwrap_err().field, "workload.conflict_rate");
    }
}
