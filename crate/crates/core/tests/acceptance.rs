//! Acceptance criteria 1 to 9. Each criterion is one test named
//! `criterion_N_*` and prints a single PASS/FAIL line with its evidence.
//! Tolerances are pinned as constants below; every criterion is exact.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use mib_core::aba::{AbaConfig, AbaInstance, AbaMessage, CoinSource};
use mib_core::coding::{decode, encode, merkle_build, merkle_verify, CodedBlock};
use mib_core::netsim::{
    check_safety, run, DelayPolicy, FaultMode, SimConfig, SimError, DEFAULT_EVENT_CAP,
};
use mib_core::rbc::{canonical_active_set, measure_failure_free};
use mib_core::types::{AbaKind, Deployment, Depth, ProtocolName, RbcKind, ReplicaId, Resilience};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const COUNT_NS: [usize; 5] = [4, 6, 8, 11, 16];
const COUNT_FS: [usize; 3] = [1, 2, 3];
const ONE_STEP_SEEDS: u64 = 200;
const SWEEP_SEEDS: u64 = 100;
const SWEEP_EPOCHS: u64 = 3;
const CODING_MESSAGES: usize = 1000;
const MAX_K_TOTAL: usize = 8;
const REPLAY_CONFIGS: usize = 20;
const ORDERING_NS: [usize; 2] = [16, 31];

fn report(criterion: u8, title: &str, failures: &[String], evidence: String) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("criterion {criterion} [{verdict}] {title}: {evidence}");
    assert!(
        failures.is_empty(),
        "criterion {criterion} failed ({} problems):\n{}",
        failures.len(),
        failures
            .iter()
            .take(20)
            .cloned()
            .collect::<Vec<_>>()
            .join("\n")
    );
}

fn lockstep(p: ProtocolName, n: usize, f: usize) -> SimConfig {
    let mut cfg = SimConfig::new(p, n, f).with_delay(DelayPolicy::LOCKSTEP);
    cfg.event_cap = DEFAULT_EVENT_CAP;
    cfg
}

/// Deployments for the message-count and step-count criteria, each with the
/// registry protocol that runs that RBC variant at that size.
fn count_cases() -> Vec<(RbcKind, ProtocolName, Deployment)> {
    let mut out = Vec::new();
    for n in COUNT_NS {
        out.push((
            RbcKind::Mbc,
            ProtocolName::Mib5,
            Deployment::with_n(Resilience::FiveF, n).unwrap(),
        ));
        out.push((
            RbcKind::Avid,
            ProtocolName::Beat,
            Deployment::with_n(Resilience::ThreeF, n).unwrap(),
        ));
    }
    for f in COUNT_FS {
        out.push((
            RbcKind::MbcL,
            ProtocolName::Mib7,
            Deployment::with_f(Resilience::SevenF, f).unwrap(),
        ));
        out.push((
            RbcKind::Mbc,
            ProtocolName::Mib7b,
            Deployment::with_f(Resilience::SevenF, f).unwrap(),
        ));
        out.push((
            RbcKind::AvidL,
            ProtocolName::Mib5b,
            Deployment::with_f(Resilience::FiveF, f).unwrap(),
        ));
    }
    out
}

/// Closed forms written out independently of the library.
fn formula(variant: RbcKind, dep: &Deployment) -> Option<u64> {
    let (n, f) = (dep.n() as u64, dep.f() as u64);
    match variant {
        RbcKind::Mbc if dep.resilience() == Resilience::SevenF => Some(49 * f * f + 21 * f + 2),
        RbcKind::Mbc => Some(n * n + n),
        RbcKind::Avid => Some(2 * n * n + n),
        RbcKind::MbcL => Some(35 * f * f + 17 * f + 2),
        RbcKind::AvidL => None,
    }
}

#[test]
fn criterion_1_message_counts() {
    let cases: Vec<_> = count_cases()
        .into_iter()
        .filter(|(v, _, d)| formula(*v, d).is_some())
        .collect();
    let failures: Vec<String> = cases
        .par_iter()
        .flat_map_iter(|&(variant, protocol, dep)| {
            let want = formula(variant, &dep).unwrap();
            let mut bad = Vec::new();
            for sender in [0, dep.n() - 1] {
                let m = measure_failure_free(dep, ReplicaId(sender as u16), variant, b"acceptance")
                    .unwrap();
                if m.messages != want {
                    bad.push(format!(
                        "{variant} n={}: standalone {} != {want}",
                        dep.n(),
                        m.messages
                    ));
                }
            }
            // Every instance of a full failure-free epoch costs the same.
            let out = run(&lockstep(protocol, dep.n(), dep.f())).unwrap();
            for (j, &count) in out.metrics.epochs[0].rbc_messages.iter().enumerate() {
                if count != want {
                    bad.push(format!(
                        "{protocol} n={} instance {j}: simulated {count} != {want}",
                        dep.n()
                    ));
                }
            }
            bad
        })
        .collect();
    report(
        1,
        "failure-free RBC message counts equal closed forms",
        &failures,
        format!("{} deployments, exact", cases.len()),
    );
}

#[test]
fn criterion_2_step_counts() {
    // (active depth, learner depth, instance maximum)
    let expected = |v: RbcKind| match v {
        RbcKind::Mbc => (2, None, 2),
        RbcKind::Avid => (3, None, 3),
        RbcKind::MbcL => (2, Some(3), 3),
        RbcKind::AvidL => (3, Some(4), 4),
    };
    let cases = count_cases();
    let failures: Vec<String> = cases
        .par_iter()
        .flat_map_iter(|&(variant, protocol, dep)| {
            let (active, learner, max) = expected(variant);
            let mut bad = Vec::new();
            let m = measure_failure_free(dep, ReplicaId(0), variant, b"steps").unwrap();
            if (m.active_depth, m.learner_depth) != (active, learner) {
                bad.push(format!(
                    "{variant} n={}: standalone {}/{:?}, want {active}/{learner:?}",
                    dep.n(),
                    m.active_depth,
                    m.learner_depth
                ));
            }
            let out = run(&lockstep(protocol, dep.n(), dep.f())).unwrap();
            let e = &out.metrics.epochs[0];
            let n1 = variant.active_size(dep.n(), dep.f());
            for j in 0..dep.n() {
                let actives = canonical_active_set(dep.n(), ReplicaId(j as u16), n1);
                for r in 0..dep.n() {
                    let is_active = actives.contains(&ReplicaId(r as u16));
                    let want = if is_active { active } else { learner.unwrap() };
                    if e.rbc_depth[j][r] != Some(want) {
                        bad.push(format!(
                            "{protocol} n={} instance {j} replica {r}: {:?}, want {want}",
                            dep.n(),
                            e.rbc_depth[j][r]
                        ));
                    }
                }
            }
            if e.max_rbc_depth() != Some(max) {
                bad.push(format!(
                    "{protocol} n={}: instance max {:?}, want {max}",
                    dep.n(),
                    e.max_rbc_depth()
                ));
            }
            bad
        })
        .collect();
    report(
        2,
        "delivery depth MBC 2, AVID 3, MBC-L 2 active/3 learner, AVID-L 3 active/4 learner",
        &failures,
        format!("{} deployments, every instance and replica", cases.len()),
    );
}

/// One ABA instance among `n` replicas with uniformly random delivery order.
/// The last `crashed` replicas never start. Returns each correct replica's
/// decision value and depth.
fn aba_alone(
    dep: Deployment,
    kind: AbaKind,
    crashed: usize,
    input: bool,
    seed: u64,
) -> Vec<Option<(bool, u32)>> {
    let cfg = AbaConfig {
        dep,
        kind,
        epoch: 0,
        instance: (seed % 7) as u16,
        coin: CoinSource::from_u64(seed),
    };
    let live = dep.n() - crashed;
    let mut nodes: Vec<AbaInstance> = (0..live)
        .map(|r| AbaInstance::new(cfg.clone(), ReplicaId(r as u16)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queue: Vec<(ReplicaId, ReplicaId, AbaMessage, Depth)> = Vec::new();
    for (r, node) in nodes.iter_mut().enumerate() {
        let step = node.propose(input as u8, Depth::ZERO).unwrap();
        queue.extend(
            step.messages
                .into_iter()
                .map(|o| (ReplicaId(r as u16), o.to, o.message, o.depth)),
        );
    }
    while !queue.is_empty() {
        let (from, to, msg, depth) = queue.swap_remove(rng.gen_range(0..queue.len()));
        if to.index() >= live {
            continue;
        }
        let step = nodes[to.index()].handle(from, msg, depth);
        queue.extend(
            step.messages
                .into_iter()
                .map(|o| (to, o.to, o.message, o.depth)),
        );
    }
    nodes
        .iter()
        .map(|n| n.decision().map(|d| (d.value, d.depth.step)))
        .collect()
}

struct OneStepRun {
    label: String,
    liveness: Option<String>,
    bad: Vec<String>,
    unanimous: usize,
}

/// Criterion 3 evidence, shared with criterion 9.
fn one_step_runs() -> &'static Vec<OneStepRun> {
    static RUNS: OnceLock<Vec<OneStepRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let cases: Vec<(ProtocolName, FaultMode, u64)> = (0..ONE_STEP_SEEDS)
            .flat_map(|s| {
                [
                    (ProtocolName::Mib5, FaultMode::None, s),
                    (ProtocolName::Mib7, FaultMode::Crash, s),
                ]
            })
            .collect();
        cases
            .par_iter()
            .map(|&(p, mode, seed)| {
                let label = format!("{p} {mode} seed {seed}");
                let mut bad = Vec::new();
                let mut unanimous = 0;
                // The agreement instance alone, with unanimous inputs.
                let f = 1 + (seed % 2) as usize;
                let dep = p
                    .spec()
                    .deployment(p.spec().resilience.min_n(f), f)
                    .unwrap();
                let crashed = if mode == FaultMode::Crash { f } else { 0 };
                let input = seed % 3 != 0;
                for (r, d) in aba_alone(dep, p.spec().aba, crashed, input, seed)
                    .into_iter()
                    .enumerate()
                {
                    if d != Some((input, 1)) {
                        bad.push(format!(
                            "{label} f={f} replica {r}: {d:?}, want ({input}, 1)"
                        ));
                    }
                }
                // Inside the full protocol: every instance whose correct
                // inputs were unanimous decides at depth 1 everywhere.
                let mut cfg = SimConfig::same_f(p, 1)
                    .with_seed(seed)
                    .with_fault_mode(mode)
                    .unwrap();
                cfg.event_cap = DEFAULT_EVENT_CAP;
                let liveness = match run(&cfg) {
                    Err(e) => Some(e.to_string()),
                    Ok(out) => {
                        for (&(e, j), inputs) in &out.observations.aba_inputs {
                            let values: BTreeSet<bool> = inputs.values().copied().collect();
                            if values.len() != 1 {
                                continue;
                            }
                            unanimous += 1;
                            for &r in &out.observations.correct {
                                let d = out.metrics.epochs[e as usize].aba_depth[j][r.index()];
                                if d != Some(1) {
                                    bad.push(format!(
                                        "{label} epoch {e} instance {j} replica {r}: {d:?}"
                                    ));
                                }
                            }
                        }
                        None
                    }
                };
                OneStepRun {
                    label,
                    liveness,
                    bad,
                    unanimous,
                }
            })
            .collect()
    })
}

#[test]
fn criterion_3_one_step_aba() {
    let runs = one_step_runs();
    let mut failures: Vec<String> = runs.iter().flat_map(|r| r.bad.iter().cloned()).collect();
    let unanimous: usize = runs.iter().map(|r| r.unanimous).sum();
    if unanimous == 0 {
        failures.push("no unanimous instance observed inside ACS".into());
    }
    report(
        3,
        "W1S failure-free and S1S with f crashed decide at depth 1 on unanimous inputs",
        &failures,
        format!("{ONE_STEP_SEEDS} seeds each for W1S and S1S standalone, {unanimous} unanimous instances inside ACS"),
    );
}

struct SweepRun {
    label: String,
    liveness: Option<String>,
    safety: Vec<String>,
    quorum: Vec<String>,
    epochs_checked: usize,
}

/// The criteria 4 and 5 sweep, run once and shared with criterion 9.
fn sweep_runs() -> &'static Vec<SweepRun> {
    static RUNS: OnceLock<Vec<SweepRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut cases = Vec::new();
        for p in ProtocolName::ALL {
            for mode in FaultMode::ALL {
                for seed in 0..SWEEP_SEEDS {
                    cases.push((p, mode, seed));
                }
            }
        }
        cases
            .par_iter()
            .map(|&(p, mode, seed)| {
                let label = format!("{p} {mode} seed {seed}");
                let mut cfg = SimConfig::same_f(p, 1)
                    .with_seed(seed)
                    .with_epochs(SWEEP_EPOCHS)
                    .with_fault_mode(mode)
                    .unwrap();
                cfg.event_cap = DEFAULT_EVENT_CAP;
                let mut r = SweepRun {
                    label: label.clone(),
                    liveness: None,
                    safety: Vec::new(),
                    quorum: Vec::new(),
                    epochs_checked: 0,
                };
                match run(&cfg) {
                    Err(SimError::Liveness { events, report }) => {
                        r.liveness = Some(format!("stuck after {events} events: {report}"));
                    }
                    Err(e) => r.safety.push(format!("{label}: run rejected: {e}")),
                    Ok(out) => {
                        for v in check_safety(&out) {
                            if v.property() == "liveness" {
                                r.liveness = Some(v.to_string());
                            } else if v.property() != "quorum" {
                                r.safety.push(format!("{label}: {v}"));
                            }
                        }
                        // Quorum rule, counted directly from the logs.
                        let quorum = cfg.n - cfg.f;
                        for &c in &out.observations.correct {
                            for e in &out.logs[c.index()] {
                                let ones = e.verdicts.iter().filter(|v| **v).count();
                                if ones < quorum {
                                    r.quorum.push(format!(
                                        "{label} epoch {} at {c}: {ones} < {quorum}",
                                        e.epoch
                                    ));
                                }
                                r.epochs_checked += 1;
                            }
                        }
                    }
                }
                r
            })
            .collect()
    })
}

#[test]
fn criterion_4_safety_sweep() {
    let runs = sweep_runs();
    let failures: Vec<String> = runs.iter().flat_map(|r| r.safety.iter().cloned()).collect();
    report(
        4,
        "agreement, total order, RBC agreement/integrity, ABA agreement under all fault modes",
        &failures,
        format!(
            "{} runs = 8 protocols x 4 fault modes x {SWEEP_SEEDS} seeds x {SWEEP_EPOCHS} epochs",
            runs.len()
        ),
    );
}

#[test]
fn criterion_5_quorum_rule() {
    let runs = sweep_runs();
    let failures: Vec<String> = runs.iter().flat_map(|r| r.quorum.iter().cloned()).collect();
    let epochs: usize = runs.iter().map(|r| r.epochs_checked).sum();
    report(
        5,
        "every completed epoch has at least n-f verdicts of 1",
        &failures,
        format!("{epochs} finalized epochs at correct replicas"),
    );
}

#[test]
fn criterion_6_coding_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let messages: Vec<Vec<u8>> = (0..CODING_MESSAGES)
        .map(|_| {
            let len = rng.gen_range(1..=300);
            (0..len).map(|_| rng.gen()).collect()
        })
        .collect();
    let decodes: Vec<Result<u64, String>> = messages
        .par_iter()
        .enumerate()
        .map(|(i, msg)| {
            let mut count = 0;
            for k_total in 1..=MAX_K_TOTAL {
                for k_data in 1..=k_total {
                    let blocks =
                        encode(msg, k_data, k_total).map_err(|e| format!("message {i}: {e}"))?;
                    for mask in 0u32..1 << k_total {
                        if mask.count_ones() as usize != k_data {
                            continue;
                        }
                        let subset: Vec<&CodedBlock> =
                            blocks.iter().filter(|b| mask >> b.index & 1 == 1).collect();
                        match decode(subset, k_data, k_total) {
                            Ok(back) if back == *msg => count += 1,
                            other => {
                                return Err(format!(
                                    "message {i} k={k_data}/{k_total} mask {mask:#b}: {other:?}"
                                ))
                            }
                        }
                    }
                }
            }
            Ok(count)
        })
        .collect();
    let mut failures: Vec<String> = decodes.iter().filter_map(|r| r.clone().err()).collect();
    let subsets: u64 = decodes.iter().filter_map(|r| r.as_ref().ok()).sum();

    // Single-bit tampering of the leaf, each sibling digest or the root.
    let mut tamperings = 0u64;
    for leaves in 1..=17usize {
        let data: Vec<Vec<u8>> = (0..leaves)
            .map(|i| messages[i][..messages[i].len().min(40)].to_vec())
            .collect();
        let (root, proofs) = merkle_build(&data).unwrap();
        for (i, proof) in proofs.iter().enumerate() {
            if !merkle_verify(&root, proof, &data[i]) {
                failures.push(format!("honest leaf {i}/{leaves} rejected"));
            }
            for bit in 0..data[i].len() * 8 {
                let mut leaf = data[i].clone();
                leaf[bit / 8] ^= 1 << (bit % 8);
                tamperings += 1;
                if merkle_verify(&root, proof, &leaf) {
                    failures.push(format!("leaf {i}/{leaves} bit {bit} accepted"));
                }
            }
            for level in 0..proof.branch.len() {
                for bit in 0..256 {
                    let mut bad = proof.clone();
                    bad.branch[level][bit / 8] ^= 1 << (bit % 8);
                    tamperings += 1;
                    if merkle_verify(&root, &bad, &data[i]) {
                        failures.push(format!(
                            "leaf {i}/{leaves} sibling {level} bit {bit} accepted"
                        ));
                    }
                }
            }
            for bit in 0..256 {
                let mut bad_root = root;
                bad_root[bit / 8] ^= 1 << (bit % 8);
                let mut bad = proof.clone();
                bad.root = bad_root;
                tamperings += 2;
                if merkle_verify(&bad_root, proof, &data[i])
                    || merkle_verify(&bad_root, &bad, &data[i])
                {
                    failures.push(format!("leaf {i}/{leaves} root bit {bit} accepted"));
                }
            }
        }
    }
    report(
        6,
        "MDS round trip over every k_data-subset, Merkle single-bit tampering rejected",
        &failures,
        format!("{CODING_MESSAGES} messages, {subsets} subset decodes, {tamperings}/{tamperings} tamperings rejected"),
    );
}

fn replay_configs() -> Vec<SimConfig> {
    let delays = [
        DelayPolicy::Uniform { lo: 1, hi: 10 },
        DelayPolicy::PerLink { lo: 1, hi: 25 },
        DelayPolicy::AdversarialReorder,
        DelayPolicy::LOCKSTEP,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e91a7);
    (0..REPLAY_CONFIGS)
        .map(|i| {
            let p = ProtocolName::ALL[i % 8];
            let mode = FaultMode::ALL[rng.gen_range(0..4)];
            let f = rng.gen_range(1..=2);
            SimConfig::same_f(p, f)
                .with_seed(rng.gen())
                .with_epochs(rng.gen_range(1..=3))
                .with_delay(delays[rng.gen_range(0..delays.len())])
                .with_fault_mode(mode)
                .unwrap()
        })
        .collect()
}

#[test]
fn criterion_7_determinism() {
    let cfgs = replay_configs();
    let failures: Vec<String> = cfgs
        .par_iter()
        .filter_map(|cfg| {
            let a = run(cfg).map_err(|e| e.to_string());
            let b = run(cfg).map_err(|e| e.to_string());
            let label = format!(
                "{} {} seed {}",
                cfg.protocol,
                cfg.faults.mode_label(),
                cfg.seed
            );
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    let same_metrics =
                        a.metrics.to_json().into_bytes() == b.metrics.to_json().into_bytes();
                    let same_logs = a.logs == b.logs && a.log_digest() == b.log_digest();
                    (!(same_metrics && same_logs)).then(|| format!("{label}: replay diverged"))
                }
                (a, b) => Some(format!("{label}: {a:?} / {b:?}", a = a.err(), b = b.err())),
            }
        })
        .collect();
    report(
        7,
        "byte-identical metrics and delivery logs on replay",
        &failures,
        format!("{} sampled configs run twice", cfgs.len()),
    );
}

#[test]
fn criterion_8_mib5_below_beat() {
    let mut failures = Vec::new();
    let mut evidence = Vec::new();
    for n in ORDERING_NS {
        let beat =
            run(&lockstep(ProtocolName::Beat, n, Resilience::ThreeF.max_f(n)).with_epochs(2))
                .unwrap();
        let mib5 = run(&lockstep(ProtocolName::Mib5, n, Resilience::FiveF.max_f(n)).with_epochs(2))
            .unwrap();
        for (b, m) in beat.metrics.epochs.iter().zip(&mib5.metrics.epochs) {
            if m.max_depth >= b.max_depth {
                failures.push(format!(
                    "n={n} epoch {}: depth mib5 {} >= beat {}",
                    b.epoch, m.max_depth, b.max_depth
                ));
            }
            if m.messages >= b.messages {
                failures.push(format!(
                    "n={n} epoch {}: messages mib5 {} >= beat {}",
                    b.epoch, m.messages, b.messages
                ));
            }
        }
        if mib5.metrics.total_messages >= beat.metrics.total_messages {
            failures.push(format!("n={n}: total messages not lower"));
        }
        evidence.push(format!(
            "n={n} depth {}<{} messages {}<{}",
            mib5.metrics.epochs[0].max_depth,
            beat.metrics.epochs[0].max_depth,
            mib5.metrics.total_messages,
            beat.metrics.total_messages
        ));
    }
    report(
        8,
        "mib5 has lower max depth and fewer messages than beat",
        &failures,
        evidence.join(", "),
    );
}

#[test]
fn criterion_9_no_event_cap() {
    let mut failures: Vec<String> = Vec::new();
    let mut runs = 0;
    for r in one_step_runs() {
        runs += 1;
        if let Some(e) = &r.liveness {
            failures.push(format!("{}: {e}", r.label));
        }
    }
    for r in sweep_runs() {
        runs += 1;
        if let Some(e) = &r.liveness {
            failures.push(format!("{}: {e}", r.label));
        }
    }
    report(
        9,
        "no run of criteria 3 to 5 hits the event cap or leaves an epoch unfinished",
        &failures,
        format!("{runs} runs, cap {DEFAULT_EVENT_CAP} events"),
    );
}
