use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How long each envelope spends in flight, in virtual ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelayPolicy {
    /// Independent uniform delay in `[lo, hi]` per envelope.
    Uniform { lo: u64, hi: u64 },
    /// One uniform delay in `[lo, hi]` per directed link, drawn up front.
    PerLink { lo: u64, hi: u64 },
    /// Unit delay; among envelopes due at the same tick, the most recently
    /// sent is delivered first.
    AdversarialReorder,
}

impl DelayPolicy {
    /// Every envelope takes exactly one tick, so virtual time equals
    /// causal depth.
    pub const LOCKSTEP: DelayPolicy = DelayPolicy::Uniform { lo: 1, hi: 1 };

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            DelayPolicy::Uniform { lo, hi } | DelayPolicy::PerLink { lo, hi }
                if lo == 0 || hi < lo =>
            {
                Err(format!(
                    "delay bounds must satisfy 1 <= lo <= hi, got lo={lo} hi={hi}"
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            DelayPolicy::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
            DelayPolicy::PerLink { lo, hi } => format!("per-link({lo},{hi})"),
            DelayPolicy::AdversarialReorder => "adversarial-reorder".to_string(),
        }
    }
}

/// Draws delays for one run.
#[derive(Debug)]
pub(crate) struct DelayModel {
    policy: DelayPolicy,
    links: Vec<u64>,
    n: usize,
}

impl DelayModel {
    pub(crate) fn new(policy: DelayPolicy, n: usize, rng: &mut ChaCha8Rng) -> Self {
        let links = match policy {
            DelayPolicy::PerLink { lo, hi } => (0..n * n).map(|_| rng.gen_range(lo..=hi)).collect(),
            _ => Vec::new(),
        };
        DelayModel { policy, links, n }
    }

    pub(crate) fn delay(&self, from: usize, to: usize, rng: &mut ChaCha8Rng) -> u64 {
        match self.policy {
            DelayPolicy::Uniform { lo, hi } if lo == hi => lo,
            DelayPolicy::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            DelayPolicy::PerLink { .. } => self.links[from * self.n + to],
            DelayPolicy::AdversarialReorder => 1,
        }
    }

    pub(crate) fn lifo(&self) -> bool {
        self.policy == DelayPolicy::AdversarialReorder
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn per_link_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DelayModel::new(DelayPolicy::PerLink { lo: 1, hi: 50 }, 4, &mut rng);
        let first = m.delay(1, 2, &mut rng);
        for _ in 0..10 {
            assert_eq!(m.delay(1, 2, &mut rng), first);
        }
    }

    #[test]
    fn uniform_stays_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DelayModel::new(DelayPolicy::Uniform { lo: 2, hi: 9 }, 4, &mut rng);
        for _ in 0..200 {
            assert!((2..=9).contains(&m.delay(0, 1, &mut rng)));
        }
    }

    #[test]
    fn validation() {
        assert!(DelayPolicy::Uniform { lo: 0, hi: 3 }.validate().is_err());
        assert!(DelayPolicy::PerLink { lo: 5, hi: 3 }.validate().is_err());
        assert!(DelayPolicy::LOCKSTEP.validate().is_ok());
    }
}
