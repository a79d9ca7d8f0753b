//! Property suites behind `mib check`.

use std::fmt::Write as _;

use mib_core::coding::{decode, encode, merkle_build, merkle_verify, CodedBlock};
use mib_core::netsim::{check_safety, run, workload, DelayPolicy, FaultMode, SimConfig, Violation};
use mib_core::rbc::{analytic_message_count, measure_failure_free};
use mib_core::types::{Deployment, ProtocolName, RbcKind, ReplicaId, Resilience};
use rayon::prelude::*;

use crate::error::CliError;

pub const SCOPES: [&str; 5] = ["coding", "rbc", "aba", "acs", "determinism"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyResult {
    pub scope: &'static str,
    pub property: String,
    pub passed: bool,
    pub detail: String,
}

type Outcome = Result<String, String>;

struct Property {
    scope: &'static str,
    name: &'static str,
    run: fn(u64) -> Outcome,
}

const PROPERTIES: &[Property] = &[
    Property {
        scope: "coding",
        name: "mds-round-trip",
        run: mds_round_trip,
    },
    Property {
        scope: "coding",
        name: "merkle-tamper",
        run: merkle_tamper,
    },
    Property {
        scope: "rbc",
        name: "count-mbc",
        run: |_| rbc_counts(RbcKind::Mbc),
    },
    Property {
        scope: "rbc",
        name: "count-avid",
        run: |_| rbc_counts(RbcKind::Avid),
    },
    Property {
        scope: "rbc",
        name: "count-mbc-l",
        run: |_| rbc_counts(RbcKind::MbcL),
    },
    Property {
        scope: "rbc",
        name: "count-avid-l",
        run: |_| rbc_counts(RbcKind::AvidL),
    },
    Property {
        scope: "rbc",
        name: "step-depth",
        run: |_| rbc_depths(),
    },
    Property {
        scope: "rbc",
        name: "rbc-agreement",
        run: rbc_agreement,
    },
    Property {
        scope: "aba",
        name: "w1s-one-step",
        run: |s| one_step(ProtocolName::Mib5, FaultMode::None, s),
    },
    Property {
        scope: "aba",
        name: "s1s-one-step",
        run: |s| one_step(ProtocolName::Mib7, FaultMode::Crash, s),
    },
    Property {
        scope: "aba",
        name: "aba-agreement",
        run: aba_agreement,
    },
    Property {
        scope: "acs",
        name: "bft-agreement",
        run: |s| acs_property(s, "bft-agreement"),
    },
    Property {
        scope: "acs",
        name: "total-order",
        run: |s| acs_property(s, "total-order"),
    },
    Property {
        scope: "acs",
        name: "quorum",
        run: |s| acs_property(s, "quorum"),
    },
    Property {
        scope: "acs",
        name: "liveness",
        run: |s| acs_property(s, "liveness"),
    },
    Property {
        scope: "determinism",
        name: "replay",
        run: replay,
    },
];

/// Runs every property in `scope` (or all of them). Results keep the
/// declaration order regardless of scheduling.
pub fn check(scope: &str, seed: u64) -> Result<Vec<PropertyResult>, CliError> {
    let scope = scope.trim().to_ascii_lowercase();
    if scope != "all" && !SCOPES.contains(&scope.as_str()) {
        return Err(CliError::Field {
            field: "scope".into(),
            reason: format!("unknown scope {scope:?}; valid: all, {}", SCOPES.join(", ")),
        });
    }
    Ok(PROPERTIES
        .par_iter()
        .filter(|p| scope == "all" || p.scope == scope)
        .map(|p| {
            let out = (p.run)(seed);
            PropertyResult {
                scope: p.scope,
                property: p.name.to_string(),
                passed: out.is_ok(),
                detail: out.unwrap_or_else(|e| e),
            }
        })
        .collect())
}

pub fn render(results: &[PropertyResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:<16} {:<6} detail",
        "scope", "property", "result"
    );
    for r in results {
        let verdict = if r.passed { "pass" } else { "FAIL" };
        let _ = writeln!(
            s,
            "{:<12} {:<16} {:<6} {}",
            r.scope, r.property, verdict, r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(s, "{} properties, {} failed", results.len(), failed);
    s
}

fn mds_round_trip(seed: u64) -> Outcome {
    let messages = workload(seed, 40, 97);
    let mut checked = 0u64;
    for k_total in 1..=8usize {
        for k_data in 1..=k_total {
            for tx in &messages {
                let len = 1 + (tx.id as usize * 7) % tx.payload.len();
                let msg = &tx.payload[..len];
                let blocks = encode(msg, k_data, k_total).map_err(|e| e.to_string())?;
                for mask in 0u32..(1 << k_total) {
                    if mask.count_ones() as usize != k_data {
                        continue;
                    }
                    let subset: Vec<&CodedBlock> = blocks
                        .iter()
                        .filter(|b| mask & (1 << b.index) != 0)
                        .collect();
                    let back = decode(subset, k_data, k_total).map_err(|e| e.to_string())?;
                    if back != msg {
                        return Err(format!(
                            "k={k_data}/{k_total} subset {mask:#b} decoded wrongly"
                        ));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} subset decodes"))
}

fn merkle_tamper(seed: u64) -> Outcome {
    let leaves: Vec<Vec<u8>> = workload(seed, 7, 24)
        .into_iter()
        .map(|t| t.payload)
        .collect();
    let (root, proofs) = merkle_build(&leaves).map_err(|e| e.to_string())?;
    let mut tampered = 0;
    for (i, leaf) in leaves.iter().enumerate() {
        if !merkle_verify(&root, &proofs[i], leaf) {
            return Err(format!("honest leaf {i} rejected"));
        }
        for bit in 0..leaf.len() * 8 {
            let mut bad = leaf.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            if merkle_verify(&root, &proofs[i], &bad) {
                return Err(format!("leaf {i} bit {bit} flip accepted"));
            }
            tampered += 1;
        }
        for bit in 0..256 {
            let mut bad_root = root;
            bad_root[bit / 8] ^= 1 << (bit % 8);
            if merkle_verify(&bad_root, &proofs[i], leaf) {
                return Err(format!("root bit {bit} flip accepted for leaf {i}"));
            }
            tampered += 1;
        }
    }
    Ok(format!("{tampered} tamperings rejected"))
}

/// The deployments each variant is counted at.
fn count_grid(variant: RbcKind) -> Vec<Deployment> {
    let mut out = Vec::new();
    match variant {
        RbcKind::Mbc | RbcKind::Avid => {
            for n in [4, 6, 8, 11, 16] {
                out.extend(Deployment::with_n(variant.resilience(), n));
            }
            if variant == RbcKind::Mbc {
                out.extend((1..=3).filter_map(|f| Deployment::with_f(Resilience::SevenF, f).ok()));
            }
        }
        RbcKind::MbcL | RbcKind::AvidL => {
            out.extend((1..=3).filter_map(|f| Deployment::with_f(variant.resilience(), f).ok()));
        }
    }
    out
}

fn rbc_counts(variant: RbcKind) -> Outcome {
    let grid = count_grid(variant);
    for dep in &grid {
        let m = measure_failure_free(
            *dep,
            ReplicaId(1 % dep.n() as u16),
            variant,
            b"check payload",
        )
        .map_err(|e| e.to_string())?;
        let want = analytic_message_count(variant, dep);
        if m.messages != want {
            return Err(format!(
                "n={} f={}: measured {} != analytic {want}",
                dep.n(),
                dep.f(),
                m.messages
            ));
        }
    }
    Ok(format!("{} deployments exact", grid.len()))
}

fn rbc_depths() -> Outcome {
    let want = [
        (RbcKind::Mbc, 2, None),
        (RbcKind::Avid, 3, None),
        (RbcKind::MbcL, 2, Some(3)),
        (RbcKind::AvidL, 3, Some(4)),
    ];
    for (variant, active, learner) in want {
        for dep in count_grid(variant) {
            let m = measure_failure_free(dep, ReplicaId(0), variant, b"depth")
                .map_err(|e| e.to_string())?;
            if m.active_depth != active || m.learner_depth != learner || m.delivered != dep.n() {
                return Err(format!(
                    "{variant} n={}: active {} learner {:?}, want {active} {learner:?}",
                    dep.n(),
                    m.active_depth,
                    m.learner_depth
                ));
            }
        }
    }
    Ok("MBC 2, AVID 3, MBC-L 2/3, AVID-L 3/4".into())
}

/// Runs a sweep and returns the violations found, or the first run error.
fn sweep(cfgs: Vec<SimConfig>) -> Result<Vec<(String, Violation)>, String> {
    let results: Vec<Result<Vec<(String, Violation)>, String>> = cfgs
        .par_iter()
        .map(|cfg| {
            let label = format!(
                "{} {} seed {}",
                cfg.protocol,
                cfg.faults.mode_label(),
                cfg.seed
            );
            let out = run(cfg).map_err(|e| format!("{label}: {e}"))?;
            Ok(check_safety(&out)
                .into_iter()
                .map(|v| (label.clone(), v))
                .collect())
        })
        .collect();
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    Ok(all)
}

fn matrix(modes: &[FaultMode], seeds: std::ops::Range<u64>, epochs: u64) -> Vec<SimConfig> {
    let mut out = Vec::new();
    for p in ProtocolName::ALL {
        for &mode in modes {
            for seed in seeds.clone() {
                let cfg = SimConfig::same_f(p, 1).with_seed(seed).with_epochs(epochs);
                out.push(cfg.with_fault_mode(mode).expect("standard plans fit f"));
            }
        }
    }
    out
}

fn filtered(cfgs: Vec<SimConfig>, properties: &[&str]) -> Outcome {
    let runs = cfgs.len();
    let bad: Vec<_> = sweep(cfgs)?
        .into_iter()
        .filter(|(_, v)| properties.contains(&v.property()))
        .collect();
    match bad.first() {
        None => Ok(format!("{runs} runs clean")),
        Some((label, v)) => Err(format!("{} violations, first {label}: {v}", bad.len())),
    }
}

fn rbc_agreement(seed: u64) -> Outcome {
    filtered(
        matrix(&[FaultMode::ByzRbc, FaultMode::Crash], seed..seed + 5, 2),
        &[
            "rbc-agreement",
            "rbc-integrity",
            "rbc-totality",
            "rbc-validity",
        ],
    )
}

fn aba_agreement(seed: u64) -> Outcome {
    filtered(
        matrix(&[FaultMode::ByzAba, FaultMode::Crash], seed..seed + 5, 2),
        &["aba-agreement", "aba-validity", "aba-termination"],
    )
}

fn acs_property(seed: u64, property: &str) -> Outcome {
    filtered(matrix(&FaultMode::ALL, seed..seed + 3, 2), &[property])
}

/// Unanimous inputs decide in the one-step phase at depth 1.
fn one_step(p: ProtocolName, mode: FaultMode, seed: u64) -> Outcome {
    let seeds = 25;
    for s in seed..seed + seeds {
        let cfg = SimConfig::same_f(p, 1)
            .with_seed(s)
            .with_fault_mode(mode)
            .map_err(|e| e.to_string())?;
        let out = run(&cfg).map_err(|e| format!("seed {s}: {e}"))?;
        for e in &out.metrics.epochs {
            for (j, row) in e.aba_depth.iter().enumerate() {
                for &r in &out.observations.correct {
                    match row[r.index()] {
                        Some(1) => {}
                        other => {
                            return Err(format!(
                                "seed {s} instance {j} replica {r}: depth {other:?}"
                            ))
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{seeds} seeds at depth 1"))
}

fn replay(seed: u64) -> Outcome {
    let delays = [
        DelayPolicy::Uniform { lo: 1, hi: 10 },
        DelayPolicy::PerLink { lo: 1, hi: 20 },
        DelayPolicy::AdversarialReorder,
    ];
    let mut cfgs = Vec::new();
    for (i, p) in ProtocolName::ALL.into_iter().enumerate() {
        let mode = FaultMode::ALL[i % 4];
        let cfg = SimConfig::same_f(p, 1)
            .with_seed(seed + i as u64)
            .with_epochs(2)
            .with_delay(delays[i % 3]);
        cfgs.push(cfg.with_fault_mode(mode).map_err(|e| e.to_string())?);
    }
    let diverged: Vec<String> = cfgs
        .par_iter()
        .filter_map(|cfg| {
            let a = run(cfg);
            let b = run(cfg);
            let same = match (&a, &b) {
                (Ok(a), Ok(b)) => a.metrics == b.metrics && a.log_digest() == b.log_digest(),
                (Err(a), Err(b)) => a == b,
                _ => false,
            };
            (!same).then(|| format!("{} seed {}", cfg.protocol, cfg.seed))
        })
        .collect();
    match diverged.first() {
        None => Ok(format!("{} configs replay identically", cfgs.len())),
        Some(first) => Err(format!("replay diverged for {first}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_scope_is_rejected() {
        assert!(check("network", 0).is_err());
    }

    #[test]
    fn coding_scope_passes() {
        let r = check("coding", 3).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|p| p.passed), "{r:?}");
    }

    #[test]
    fn grids_cover_required_sizes() {
        let ns: Vec<usize> = count_grid(RbcKind::Mbc).iter().map(|d| d.n()).collect();
        assert_eq!(ns, vec![4, 6, 8, 11, 16, 8, 15, 22]);
        let ns: Vec<usize> = count_grid(RbcKind::MbcL).iter().map(|d| d.n()).collect();
        assert_eq!(ns, vec![8, 15, 22]);
    }
}
