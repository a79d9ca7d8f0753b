//! Erasure-coded reliable broadcast: AVID, MBC, and their learner variants
//! AVID-L and MBC-L.
//!
//! Every variant sits behind [`RbcInstance`]: the sender calls
//! [`RbcInstance::input`], every replica feeds received messages to
//! [`RbcInstance::handle`], and at most one delivery comes out.
//!
//! | variant | active set      | data blocks   | steps (active / learner) | messages                 |
//! |---------|-----------------|---------------|--------------------------|--------------------------|
//! | AVID    | all `n`         | `n - 2f`      | 3                        | `2n^2 + n`               |
//! | MBC     | all `n`         | `n - 2f`      | 2                        | `n^2 + n`                |
//! | AVID-L  | `n1 = 3f + 1`   | `n1 - 2f`     | 3 / 4                    | `n1 + 2n1^2 + (n-n1)n1`  |
//! | MBC-L   | `n1 = 5f + 1`   | `n1 - 2f`     | 2 / 3                    | `n1 + n1^2 + (n-n1)n1`   |

mod forge;
mod instance;
mod measure;
mod wire;

pub use forge::{forge_inconsistent_input, forge_split_input};
pub use instance::{RbcDelivery, RbcInstance, RbcStep};
pub use measure::{measure_failure_free, RbcMeasurement};
pub use wire::{RbcMessage, RbcMessageKind, WireError};

use thiserror::Error;

use crate::coding::CodingError;
use crate::types::{ConfigError, Deployment, RbcKind, ReplicaId, Threshold};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RbcError {
    #[error("{me} is not the sender {sender} of this instance")]
    NotSender { me: ReplicaId, sender: ReplicaId },
    #[error("input was already provided to this instance")]
    AlreadyInput,
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Static parameters of one broadcast instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbcConfig {
    pub dep: Deployment,
    pub sender: ReplicaId,
    pub variant: RbcKind,
    /// Replicas running the broadcast proper, in leaf order.
    pub active_set: Vec<ReplicaId>,
    pub k_data: usize,
    pub k_total: usize,
}

impl RbcConfig {
    pub fn new(dep: Deployment, sender: ReplicaId, variant: RbcKind) -> Result<Self, ConfigError> {
        let (n, f) = (dep.n(), dep.f());
        if !dep.contains(sender) {
            return Err(ConfigError::ReplicaOutOfRange {
                index: sender.index(),
                n,
            });
        }
        let min = variant.resilience().min_n(f);
        if n < min {
            return Err(ConfigError::Resilience {
                n,
                f,
                resilience: variant.resilience(),
                min,
            });
        }
        let n1 = variant.active_size(n, f);
        if n1 > n || (variant.has_learners() && n1 > u8::MAX as usize) {
            return Err(ConfigError::ActiveSetTooLarge { n1, n });
        }
        let active_set = if variant.has_learners() {
            canonical_active_set(n, sender, n1)
        } else {
            dep.replicas().collect()
        };
        Ok(RbcConfig {
            dep,
            sender,
            variant,
            active_set,
            k_data: n1 - 2 * f,
            k_total: n1,
        })
    }

    pub fn n1(&self) -> usize {
        self.active_set.len()
    }

    /// Leaf position of `id` within the active set.
    pub fn position(&self, id: ReplicaId) -> Option<usize> {
        if self.variant.has_learners() {
            let n = self.dep.n();
            let offset = (id.index() + n - self.sender.index()) % n;
            (offset < self.n1()).then_some(offset)
        } else {
            self.dep.contains(id).then_some(id.index())
        }
    }

    pub fn is_active(&self, id: ReplicaId) -> bool {
        self.position(id).is_some()
    }

    pub fn learners(&self) -> impl Iterator<Item = ReplicaId> + '_ {
        self.dep.replicas().filter(|&r| !self.is_active(r))
    }

    pub(crate) fn threshold(&self, t: Threshold) -> usize {
        self.dep.threshold(t)
    }

    /// Active-set indices as carried on the wire by the learner variants.
    pub(crate) fn wire_active_set(&self) -> Option<Vec<u16>> {
        self.variant
            .has_learners()
            .then(|| self.active_set.iter().map(|r| r.0).collect())
    }
}

/// `{p_((sender + k) mod n) : 0 <= k < n1}`.
pub fn canonical_active_set(n: usize, sender: ReplicaId, n1: usize) -> Vec<ReplicaId> {
    (0..n1)
        .map(|k| ReplicaId::from((sender.index() + k) % n))
        .collect()
}

/// Closed-form failure-free message count of one broadcast instance.
pub fn analytic_message_count(variant: RbcKind, dep: &Deployment) -> u64 {
    let n = dep.n() as u64;
    let n1 = variant.active_size(dep.n(), dep.f()) as u64;
    let learners = n - n1;
    match variant {
        RbcKind::Mbc => n * n + n,
        RbcKind::Avid => 2 * n * n + n,
        RbcKind::MbcL => n1 + n1 * n1 + learners * n1,
        RbcKind::AvidL => n1 + 2 * n1 * n1 + learners * n1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Resilience;

    #[test]
    fn analytic_counts() {
        let dep = |n, f, r| Deployment::new(n, f, r).unwrap();
        assert_eq!(
            analytic_message_count(RbcKind::Mbc, &dep(6, 1, Resilience::FiveF)),
            42
        );
        assert_eq!(
            analytic_message_count(RbcKind::Avid, &dep(4, 1, Resilience::ThreeF)),
            36
        );
        assert_eq!(
            analytic_message_count(RbcKind::MbcL, &dep(8, 1, Resilience::SevenF)),
            54
        );
        assert_eq!(
            analytic_message_count(RbcKind::Mbc, &dep(8, 1, Resilience::SevenF)),
            72
        );
        assert_eq!(
            analytic_message_count(RbcKind::MbcL, &dep(15, 2, Resilience::SevenF)),
            176
        );
        for f in 1..6u64 {
            let d = dep(7 * f as usize + 1, f as usize, Resilience::SevenF);
            assert_eq!(
                analytic_message_count(RbcKind::MbcL, &d),
                35 * f * f + 17 * f + 2
            );
            assert_eq!(
                analytic_message_count(RbcKind::Mbc, &d),
                49 * f * f + 21 * f + 2
            );
        }
    }

    #[test]
    fn canonical_sets() {
        let set = canonical_active_set(6, ReplicaId(2), 4);
        assert_eq!(
            set,
            vec![ReplicaId(2), ReplicaId(3), ReplicaId(4), ReplicaId(5)]
        );
        let set = canonical_active_set(8, ReplicaId(6), 6);
        assert_eq!(
            set.iter().map(|r| r.0).collect::<Vec<_>>(),
            vec![6, 7, 0, 1, 2, 3]
        );
    }

    #[test]
    fn config_invariants() {
        let dep = Deployment::new(8, 1, Resilience::SevenF).unwrap();
        let c = RbcConfig::new(dep, ReplicaId(6), RbcKind::MbcL).unwrap();
        assert_eq!((c.n1(), c.k_data, c.k_total), (6, 4, 6));
        assert_eq!(c.position(ReplicaId(0)), Some(2));
        assert_eq!(c.position(ReplicaId(4)), None);
        assert_eq!(c.learners().map(|r| r.0).collect::<Vec<_>>(), vec![4, 5]);

        let dep = Deployment::new(6, 1, Resilience::FiveF).unwrap();
        let c = RbcConfig::new(dep, ReplicaId(0), RbcKind::Mbc).unwrap();
        assert_eq!((c.k_data, c.k_total), (4, 6));
        let c = RbcConfig::new(dep, ReplicaId(0), RbcKind::AvidL).unwrap();
        assert_eq!((c.n1(), c.k_data, c.k_total), (4, 2, 4));
    }

    #[test]
    fn undersized_deployments_rejected() {
        // n = 1 with f = 1 is not even a deployment.
        assert!(Deployment::new(1, 1, Resilience::FiveF).is_err());
        let dep = Deployment::new(4, 1, Resilience::ThreeF).unwrap();
        assert!(matches!(
            RbcConfig::new(dep, ReplicaId(0), RbcKind::Mbc),
            Err(ConfigError::Resilience { .. })
        ));
        let dep = Deployment::new(6, 1, Resilience::FiveF).unwrap();
        assert!(RbcConfig::new(dep, ReplicaId(0), RbcKind::MbcL).is_err());
        assert!(RbcConfig::new(dep, ReplicaId(6), RbcKind::Mbc).is_err());
    }
}
