//! Randomized invariants over the simulator and the broadcast variants.

use mib_core::netsim::{check_safety, run, DelayPolicy, FaultMode, SimConfig};
use mib_core::rbc::{analytic_message_count, measure_failure_free};
use mib_core::types::{Deployment, ProtocolName, RbcKind, ReplicaId};
use proptest::prelude::*;

fn protocol() -> impl Strategy<Value = ProtocolName> {
    prop::sample::select(ProtocolName::ALL.to_vec())
}

fn fault_mode() -> impl Strategy<Value = FaultMode> {
    prop::sample::select(FaultMode::ALL.to_vec())
}

fn delay() -> impl Strategy<Value = DelayPolicy> {
    prop_oneof![
        (1u64..5, 0u64..30).prop_map(|(lo, w)| DelayPolicy::Uniform { lo, hi: lo + w }),
        (1u64..5, 0u64..30).prop_map(|(lo, w)| DelayPolicy::PerLink { lo, hi: lo + w }),
        Just(DelayPolicy::AdversarialReorder),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn random_runs_are_safe_and_live(
        p in protocol(),
        mode in fault_mode(),
        delay in delay(),
        f in 1usize..=2,
        seed in any::<u64>(),
        batch_per_replica in 1usize..12,
    ) {
        let mut cfg = SimConfig::same_f(p, f).with_seed(seed).with_epochs(2).with_delay(delay);
        cfg.batch_size = batch_per_replica * cfg.n;
        cfg.buffer = cfg.batch_size;
        let cfg = cfg.with_fault_mode(mode).unwrap();
        let out = run(&cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let violations = check_safety(&out);
        prop_assert!(violations.is_empty(), "{:?}", violations);
        // Nothing is delivered twice across a replica's log.
        for &r in &out.observations.correct {
            let mut ids: Vec<u64> = out.logs[r.index()].iter().flat_map(|e| e.batch.iter().map(|t| t.id)).collect();
            let total = ids.len();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), total);
        }
    }

    #[test]
    fn failure_free_broadcast_matches_closed_form(
        variant in prop::sample::select(RbcKind::ALL.to_vec()),
        f in 0usize..=3,
        extra in 0usize..4,
        sender in any::<u16>(),
        value in prop::collection::vec(any::<u8>(), 1..400),
    ) {
        let resilience = variant.resilience();
        let dep = Deployment::new(resilience.min_n(f) + extra, f, resilience).unwrap();
        let sender = ReplicaId(sender % dep.n() as u16);
        let m = measure_failure_free(dep, sender, variant, &value).unwrap();
        prop_assert_eq!(m.messages, analytic_message_count(variant, &dep));
        prop_assert_eq!(m.delivered, dep.n());
    }
}
