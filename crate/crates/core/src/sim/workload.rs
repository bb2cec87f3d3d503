use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::sim::config::WorkloadConfig;
use crate::types::{Key, Op, Value};

/// The contended key.
pub const HOT_KEY: &str = "0";

/// Draws operations: the hot key with probability `conflict_rate`, otherwise
/// a key no other command uses.
#[derive(Clone, Debug)]
pub struct Workload {
    cfg: WorkloadConfig,
    rng: ChaCha8Rng,
}

impl Workload {
    pub fn new(cfg: WorkloadConfig, rng: ChaCha8Rng) -> Self {
        Workload { cfg, rng }
    }

    pub fn next_op(&mut self, proc: u32, client: u32, seq: u64) -> Op {
        let key = if self.rng.gen_bool(self.cfg.conflict_rate) {
            Key::from(HOT_KEY)
        } else {
            Key::from(format!("{proc}-{client}-{seq}").as_str())
        };
        if self.rng.gen_bool(self.cfg.read_ratio) {
            Op::Get { key }
        } else {
            let mut bytes = vec![0u8; self.cfg.payload_bytes];
            self.rng.fill(&mut bytes[..]);
            Op::Put { key, value: Value::from(bytes) }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn workload(rho: f64, reads: f64) -> Workload {
        let cfg = WorkloadConfig { conflict_rate: rho, read_ratio: reads, ..Default::default() };
        Workload::new(cfg, ChaCha8Rng::seed_from_u64(7))
    }

    #[test]
    fn extremes() {
        let mut w = workload(1.0, 0.0);
        for s in 0..50 {
            match w.next_op(1, 0, s) {
                Op::Put { key, value } => {
                    assert_eq!(key, Key::from(HOT_KEY));
                    assert_eq!(value.as_bytes().len(), 8);
                }
                op => panic!("{op:?}"),
            }
        }
        let mut w = workload(0.0, 1.0);
        let keys: std::collections::BTreeSet<_> =
            (0..50).map(|s| w.next_op(2, 1, s).key().clone()).collect();
        assert_eq!(keys.len(), 50);
        assert!(!keys.contains(&Key::from(HOT_KEY)));
    }

    #[test]
    fn rate_is_roughly_honoured() {
        let mut w = workload(0.3, 0.0);
        let hot = (0..10_000).filter(|&s| w.next_op(1, 0, s).key() == &Key::from(HOT_KEY)).count();
        assert!((2_700..3_300).contains(&hot), "{hot}");
    }
}
