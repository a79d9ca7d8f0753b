//! Safety and liveness properties checked over a finished run.

use std::collections::BTreeSet;
use std::fmt;

use super::SimOutcome;
use crate::types::{ReplicaId, Threshold};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Two correct replicas finalized different batches for one epoch.
    Agreement {
        epoch: u64,
        a: ReplicaId,
        b: ReplicaId,
    },
    /// Two correct logs disagree on a common prefix of transactions.
    TotalOrder {
        a: ReplicaId,
        b: ReplicaId,
        position: usize,
    },
    RbcAgreement {
        epoch: u64,
        instance: usize,
    },
    RbcIntegrity {
        epoch: u64,
        instance: usize,
        replica: ReplicaId,
    },
    /// Some correct replica delivered but another never did.
    RbcTotality {
        epoch: u64,
        instance: usize,
        missing: ReplicaId,
    },
    /// A correct sender's broadcast was not delivered everywhere.
    RbcValidity {
        epoch: u64,
        instance: usize,
        missing: ReplicaId,
    },
    AbaAgreement {
        epoch: u64,
        instance: usize,
    },
    AbaValidity {
        epoch: u64,
        instance: usize,
        value: bool,
    },
    AbaTermination {
        epoch: u64,
        instance: usize,
        replica: ReplicaId,
    },
    Quorum {
        epoch: u64,
        replica: ReplicaId,
        ones: usize,
    },
    Unfinished {
        replica: ReplicaId,
        epochs: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl Violation {
    /// Short property name for tables.
    pub fn property(&self) -> &'static str {
        match self {
            Violation::Agreement { .. } => "bft-agreement",
            Violation::TotalOrder { .. } => "total-order",
            Violation::RbcAgreement { .. } => "rbc-agreement",
            Violation::RbcIntegrity { .. } => "rbc-integrity",
            Violation::RbcTotality { .. } => "rbc-totality",
            Violation::RbcValidity { .. } => "rbc-validity",
            Violation::AbaAgreement { .. } => "aba-agreement",
            Violation::AbaValidity { .. } => "aba-validity",
            Violation::AbaTermination { .. } => "aba-termination",
            Violation::Quorum { .. } => "quorum",
            Violation::Unfinished { .. } => "liveness",
        }
    }
}

/// Checks every safety property over the correct replicas of a run.
pub fn check_safety(out: &SimOutcome) -> Vec<Violation> {
    let obs = &out.observations;
    let correct = &obs.correct;
    let mut v = Vec::new();
    let epochs = out.config.epochs as usize;
    let n = out.metrics.n;
    let quorum = out
        .config
        .protocol
        .spec()
        .deployment(out.config.n, out.config.f)
        .map(|d| d.threshold(Threshold::NMinusF))
        .unwrap_or(n);

    for &r in correct {
        let log = &out.logs[r.index()];
        if log.len() != epochs {
            v.push(Violation::Unfinished {
                replica: r,
                epochs: log.len(),
            });
        }
        for e in log {
            if e.verdict_ones() < quorum {
                v.push(Violation::Quorum {
                    epoch: e.epoch,
                    replica: r,
                    ones: e.verdict_ones(),
                });
            }
        }
    }

    // Epoch agreement and total order, each correct replica against the first.
    if let Some(&first) = correct.first() {
        let base = &out.logs[first.index()];
        let base_seq: Vec<u64> = base
            .iter()
            .flat_map(|e| e.batch.iter().map(|t| t.id))
            .collect();
        for &r in &correct[1..] {
            let log = &out.logs[r.index()];
            for (a, b) in base.iter().zip(log) {
                // Depth is local to each replica and not part of the agreed value.
                if (a.epoch, &a.batch, &a.verdicts) != (b.epoch, &b.batch, &b.verdicts) {
                    v.push(Violation::Agreement {
                        epoch: a.epoch,
                        a: first,
                        b: r,
                    });
                }
            }
            let seq: Vec<u64> = log
                .iter()
                .flat_map(|e| e.batch.iter().map(|t| t.id))
                .collect();
            if let Some(position) = base_seq.iter().zip(&seq).position(|(x, y)| x != y) {
                v.push(Violation::TotalOrder {
                    a: first,
                    b: r,
                    position,
                });
            }
        }
    }

    for e in 0..epochs as u64 {
        let finished_all = correct
            .iter()
            .all(|r| out.logs[r.index()].len() > e as usize);
        for j in 0..n {
            let deliveries = obs.rbc.get(&(e, j));
            let mut values = BTreeSet::new();
            if let Some(map) = deliveries {
                for (&r, ds) in map {
                    if ds.len() > 1 {
                        v.push(Violation::RbcIntegrity {
                            epoch: e,
                            instance: j,
                            replica: r,
                        });
                    }
                    values.extend(ds.iter().copied());
                }
            }
            if values.len() > 1 {
                v.push(Violation::RbcAgreement {
                    epoch: e,
                    instance: j,
                });
            }
            let delivered_by = |r: &ReplicaId| deliveries.is_some_and(|m| m.contains_key(r));
            let sender_correct = correct.contains(&ReplicaId::from(j));
            if finished_all && (!values.is_empty() || sender_correct) {
                for r in correct.iter().filter(|r| !delivered_by(r)) {
                    v.push(if sender_correct {
                        Violation::RbcValidity {
                            epoch: e,
                            instance: j,
                            missing: *r,
                        }
                    } else {
                        Violation::RbcTotality {
                            epoch: e,
                            instance: j,
                            missing: *r,
                        }
                    });
                }
            }

            let decisions = obs.aba_decisions.get(&(e, j));
            let decided: BTreeSet<bool> = decisions
                .map(|m| m.values().copied().collect())
                .unwrap_or_default();
            if decided.len() > 1 {
                v.push(Violation::AbaAgreement {
                    epoch: e,
                    instance: j,
                });
            }
            let inputs: BTreeSet<bool> = obs
                .aba_inputs
                .get(&(e, j))
                .map(|m| m.values().copied().collect())
                .unwrap_or_default();
            for &value in &decided {
                if !inputs.contains(&value) {
                    v.push(Violation::AbaValidity {
                        epoch: e,
                        instance: j,
                        value,
                    });
                }
            }
            if finished_all {
                for r in correct
                    .iter()
                    .filter(|r| !decisions.is_some_and(|m| m.contains_key(r)))
                {
                    v.push(Violation::AbaTermination {
                        epoch: e,
                        instance: j,
                        replica: *r,
                    });
                }
            }
        }
    }
    v
}
