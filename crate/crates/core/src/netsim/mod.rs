//! Deterministic discrete-event simulator.
//!
//! Every run is a pure function of its [`SimConfig`]: one seeded RNG draws
//! all delays, events are ordered by `(time, sequence)`, and all maps are
//! ordered. The run continues until the queue drains, so every envelope
//! between correct replicas is delivered and message counts are complete.

mod check;
mod delay;
mod faults;
mod metrics;

pub use check::{check_safety, Violation};
pub use delay::DelayPolicy;
pub use faults::{FaultMode, FaultPlan};
pub use metrics::{depth_report, DepthSummary, EpochMetrics, RunMetrics, CSV_HEADER};

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::acs::{encode_proposal, AcsEvent, AcsNode, AcsParams, AcsStep, EpochOutput};
use crate::coding::Digest;
use crate::rbc::{forge_split_input, RbcConfig};
use crate::types::{
    ConfigError, Depth, InstanceTag, MessageEnvelope, Payload, Phase, ProtocolName, ReplicaId,
    Transaction,
};

pub const DEFAULT_EVENT_CAP: u64 = 10_000_000;
pub const EVENT_CAP_ENV: &str = "MIB_EVENT_CAP";

/// The event cap, overridable through `MIB_EVENT_CAP`.
pub fn default_event_cap() -> u64 {
    std::env::var(EVENT_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_EVENT_CAP)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub protocol: ProtocolName,
    pub n: usize,
    pub f: usize,
    /// Global batch size `B`.
    pub batch_size: usize,
    pub epochs: u64,
    /// Transactions pre-loaded into every replica's buffer.
    pub buffer: usize,
    pub tx_size: usize,
    pub seed: u64,
    pub delay: DelayPolicy,
    pub faults: FaultPlan,
    pub event_cap: u64,
}

impl SimConfig {
    /// Defaults: `B = 8n` pre-loaded transactions of 250 bytes, one epoch,
    /// uniform delays in `[1, 10]`, no faults.
    pub fn new(protocol: ProtocolName, n: usize, f: usize) -> Self {
        SimConfig {
            protocol,
            n,
            f,
            batch_size: 8 * n,
            epochs: 1,
            buffer: 8 * n,
            tx_size: 250,
            seed: 0,
            delay: DelayPolicy::Uniform { lo: 1, hi: 10 },
            faults: FaultPlan::none(),
            event_cap: default_event_cap(),
        }
    }

    /// Largest `f` the protocol tolerates at this `n`.
    pub fn same_n(protocol: ProtocolName, n: usize) -> Self {
        let f = protocol.spec().resilience.max_f(n);
        SimConfig::new(protocol, n, f)
    }

    /// Smallest `n` the protocol allows for this `f`.
    pub fn same_f(protocol: ProtocolName, f: usize) -> Self {
        let n = protocol.spec().resilience.min_n(f);
        SimConfig::new(protocol, n, f)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epochs(mut self, epochs: u64) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_delay(mut self, delay: DelayPolicy) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_faults(mut self, faults: FaultPlan) -> Self {
        self.faults = faults;
        self
    }

    /// The standard plan for `mode` at this deployment size.
    pub fn with_fault_mode(self, mode: FaultMode) -> Result<Self, SimError> {
        let dep = self.protocol.spec().deployment(self.n, self.f)?;
        Ok(self.with_faults(FaultPlan::standard(mode, &dep)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid fault plan: {0}")]
    Faults(String),
    #[error("invalid delay policy: {0}")]
    Delay(String),
    #[error("liveness failure after {events} events: {report}")]
    Liveness { events: u64, report: String },
}

/// What correct replicas observed, for the safety checker.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Observations {
    pub correct: Vec<ReplicaId>,
    /// `(epoch, instance) -> replica -> digests of delivered values`.
    pub rbc: BTreeMap<(u64, usize), BTreeMap<ReplicaId, Vec<Digest>>>,
    pub aba_inputs: BTreeMap<(u64, usize), BTreeMap<ReplicaId, bool>>,
    pub aba_decisions: BTreeMap<(u64, usize), BTreeMap<ReplicaId, bool>>,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub config: SimConfig,
    pub metrics: RunMetrics,
    /// Finalized epochs per replica, indexed by replica.
    pub logs: Vec<Vec<EpochOutput>>,
    pub observations: Observations,
}

impl SimOutcome {
    /// Serialized delivery logs of every replica, for replay comparison.
    pub fn log_digest(&self) -> String {
        let mut h = Sha256::new();
        for (i, log) in self.logs.iter().enumerate() {
            h.update((i as u64).to_be_bytes());
            for out in log {
                h.update(out.epoch.to_be_bytes());
                h.update(encode_proposal(&out.batch));
            }
        }
        hex(&h.finalize().into())
    }
}

fn hex(d: &Digest) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn value_digest(v: &[u8]) -> Digest {
    Sha256::digest(v).into()
}

/// Synthetic transactions with ids `0..count` and pseudo-random payloads.
pub fn workload(seed: u64, count: usize, tx_size: usize) -> Vec<Transaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7a11);
    (0..count as u64)
        .map(|id| {
            let mut payload = vec![0u8; tx_size];
            rng.fill_bytes(&mut payload);
            Transaction { id, payload }
        })
        .collect()
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Scheduled {
    time: u64,
    seq: i64,
    env: EnvelopeKey,
}

/// Envelopes are kept out of the heap ordering; the key indexes a slab.
#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct EnvelopeKey(usize);

struct Sim {
    cfg: SimConfig,
    n: usize,
    correct: Vec<bool>,
    rng: ChaCha8Rng,
    delays: delay::DelayModel,
    queue: BinaryHeap<Reverse<Scheduled>>,
    slab: Vec<Option<MessageEnvelope>>,
    free: Vec<usize>,
    counter: i64,
    now: u64,
    metrics: RunMetrics,
    epoch_start: BTreeMap<u64, u64>,
    observations: Observations,
    trace: Sha256,
}

impl Sim {
    fn epoch_metrics(&mut self, epoch: u64) -> &mut EpochMetrics {
        let n = self.n;
        let idx = epoch as usize;
        while self.metrics.epochs.len() <= idx {
            let e = self.metrics.epochs.len() as u64;
            self.metrics.epochs.push(EpochMetrics::new(e, n));
        }
        &mut self.metrics.epochs[idx]
    }

    fn send(&mut self, env: MessageEnvelope) {
        let len = env.payload.encoded_len() as u64;
        let m = self.epoch_metrics(env.epoch);
        m.messages += 1;
        m.bytes += len;
        let j = env.instance.index as usize;
        match env.instance.phase {
            Phase::Rbc => m.rbc_messages[j] += 1,
            Phase::Aba => m.aba_messages[j] += 1,
        }
        self.metrics.total_messages += 1;
        self.metrics.total_bytes += len;
        let delay = self
            .delays
            .delay(env.sender.index(), env.receiver.index(), &mut self.rng);
        self.counter += 1;
        let seq = if self.delays.lifo() {
            -self.counter
        } else {
            self.counter
        };
        let key = match self.free.pop() {
            Some(k) => {
                self.slab[k] = Some(env);
                k
            }
            None => {
                self.slab.push(Some(env));
                self.slab.len() - 1
            }
        };
        self.queue.push(Reverse(Scheduled {
            time: self.now + delay,
            seq,
            env: EnvelopeKey(key),
        }));
    }

    fn absorb(&mut self, from: ReplicaId, step: AcsStep) {
        let plan = &self.cfg.faults;
        let byz_rbc = plan.is_byz_rbc(from);
        let byz_aba = plan.is_byz_aba(from);
        let correct = self.correct[from.index()];
        for fault in &step.faults {
            *self
                .metrics
                .dropped_invalid
                .entry(format!("{:?}", fault.kind))
                .or_default() += 1;
        }
        let mut forged = Vec::new();
        for event in step.events {
            match event {
                AcsEvent::EpochStarted { epoch } => {
                    self.epoch_start.entry(epoch).or_insert(self.now);
                    if byz_rbc {
                        forged.extend(self.forge(from, epoch));
                    }
                }
                AcsEvent::RbcDelivered {
                    epoch,
                    instance,
                    value,
                    depth,
                } if correct => {
                    self.epoch_metrics(epoch).rbc_depth[instance][from.index()] = Some(depth.step);
                    self.observations
                        .rbc
                        .entry((epoch, instance))
                        .or_default()
                        .entry(from)
                        .or_default()
                        .push(value_digest(&value));
                }
                AcsEvent::AbaInput {
                    epoch,
                    instance,
                    value,
                } if correct => {
                    self.observations
                        .aba_inputs
                        .entry((epoch, instance))
                        .or_default()
                        .insert(from, value);
                }
                AcsEvent::AbaDecided {
                    epoch,
                    instance,
                    decision,
                } if correct => {
                    let m = self.epoch_metrics(epoch);
                    m.aba_depth[instance][from.index()] = Some(decision.depth.step);
                    m.aba_rounds = m.aba_rounds.max(decision.round);
                    if decision.one_step() {
                        m.one_step_decisions += 1;
                    }
                    self.observations
                        .aba_decisions
                        .entry((epoch, instance))
                        .or_default()
                        .insert(from, decision.value);
                }
                AcsEvent::EpochFinalized(out) if correct => {
                    let now = self.now;
                    let start = self.epoch_start.get(&out.epoch).copied().unwrap_or(0);
                    let m = self.epoch_metrics(out.epoch);
                    m.start_time = start;
                    m.end_time = m.end_time.max(now);
                    m.latency = m.end_time - start;
                    m.max_depth = m.max_depth.max(out.depth.chain);
                    m.verdict_ones = out.verdict_ones();
                    m.finalized_by += 1;
                }
                _ => {}
            }
        }
        for mut env in step.messages {
            if byz_rbc && env.instance == InstanceTag::rbc(from.index()) {
                continue;
            }
            if byz_aba {
                faults::equivocate_aba(&mut env);
            }
            self.send(env);
        }
        for env in forged {
            self.send(env);
        }
    }

    /// Split-root input replacing the victim's own broadcast in `epoch`.
    fn forge(&self, victim: ReplicaId, epoch: u64) -> Vec<MessageEnvelope> {
        let spec = self.cfg.protocol.spec();
        let dep = spec.deployment(self.cfg.n, self.cfg.f).expect("validated");
        let cfg = RbcConfig::new(dep, victim, spec.rbc).expect("validated");
        let fake = |tag: u64| {
            encode_proposal(&[Transaction {
                id: u64::MAX - 2 * epoch - tag,
                payload: vec![tag as u8; 8],
            }])
        };
        forge_split_input(&cfg, &fake(0), &fake(1), Depth::ZERO)
            .expect("forgery encodes")
            .into_iter()
            .map(|o| MessageEnvelope {
                sender: victim,
                receiver: o.to,
                epoch,
                instance: InstanceTag::rbc(victim.index()),
                payload: Payload::Rbc(o.message),
                depth: o.depth,
            })
            .collect()
    }

    fn record_trace(&mut self, time: u64, seq: i64, env: &MessageEnvelope) {
        let t = &mut self.trace;
        t.update(time.to_be_bytes());
        t.update(seq.to_be_bytes());
        t.update(env.sender.0.to_be_bytes());
        t.update(env.receiver.0.to_be_bytes());
        t.update(env.epoch.to_be_bytes());
        t.update([env.instance.phase as u8]);
        t.update(env.instance.index.to_be_bytes());
        t.update(env.depth.step.to_be_bytes());
        t.update(env.depth.chain.to_be_bytes());
        t.update(env.payload.encode());
    }
}

/// Explains why the run stopped before every correct replica finished.
fn stuck_report(nodes: &[AcsNode], correct: &[bool]) -> String {
    let Some(node) = nodes
        .iter()
        .find(|n| correct[n.me().index()] && !n.finished())
    else {
        return "no stuck replica".to_string();
    };
    {
        let epoch = node.log().len() as u64;
        let Some(st) = node.epoch(epoch) else {
            return format!("{} never started epoch {epoch}", node.me());
        };
        let n = node.params().dep.n();
        for j in 0..n {
            let aba = st.aba(j);
            if aba.decision().is_none() {
                return format!(
                    "{} stuck in epoch {epoch}: ABA {j} undecided at round {} (input {:?}, ones so far {})",
                    node.me(),
                    aba.round(),
                    aba.proposed(),
                    st.verdict_ones()
                );
            }
        }
        for j in 0..n {
            if st.aba(j).decision().map(|d| d.value) == Some(true)
                && st.rbc(j).delivered_root().is_none()
            {
                return format!(
                    "{} stuck in epoch {epoch}: RBC {j} decided 1 but never delivered",
                    node.me()
                );
            }
        }
        format!("{} stuck in epoch {epoch}", node.me())
    }
}

/// Runs one configuration to completion.
pub fn run(cfg: &SimConfig) -> Result<SimOutcome, SimError> {
    let spec = cfg.protocol.spec();
    let dep = spec.deployment(cfg.n, cfg.f)?;
    cfg.faults.validate(&dep).map_err(SimError::Faults)?;
    cfg.delay.validate().map_err(SimError::Delay)?;
    let params = AcsParams::new(spec, dep, cfg.batch_size, cfg.epochs, cfg.seed)?;
    let txs = workload(cfg.seed, cfg.buffer, cfg.tx_size);
    let mut nodes: Vec<AcsNode> = dep
        .replicas()
        .map(|r| AcsNode::new(r, params.clone(), txs.clone()))
        .collect();
    let correct: Vec<bool> = dep.replicas().map(|r| cfg.faults.is_correct(r)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let delays = delay::DelayModel::new(cfg.delay, dep.n(), &mut rng);
    let mut sim = Sim {
        cfg: cfg.clone(),
        n: dep.n(),
        correct: correct.clone(),
        rng,
        delays,
        queue: BinaryHeap::new(),
        slab: Vec::new(),
        free: Vec::new(),
        counter: 0,
        now: 0,
        metrics: RunMetrics {
            protocol: cfg.protocol.to_string(),
            n: dep.n(),
            f: dep.f(),
            fault_mode: cfg.faults.mode_label(),
            seed: cfg.seed,
            delay: cfg.delay.label(),
            batch_size: cfg.batch_size,
            ..RunMetrics::default()
        },
        epoch_start: BTreeMap::new(),
        observations: Observations {
            correct: dep.replicas().filter(|r| correct[r.index()]).collect(),
            ..Observations::default()
        },
        trace: Sha256::new(),
    };
    for e in 0..cfg.epochs {
        sim.epoch_metrics(e);
    }

    for node in nodes.iter_mut() {
        if !cfg.faults.is_crashed(node.me(), 0) {
            let step = node.start();
            sim.absorb(node.me(), step);
        }
    }
    let mut events = 0u64;
    while let Some(Reverse(ev)) = sim.queue.pop() {
        events += 1;
        if events > cfg.event_cap {
            return Err(SimError::Liveness {
                events,
                report: format!(
                    "event cap {} exceeded; {}",
                    cfg.event_cap,
                    stuck_report(&nodes, &correct)
                ),
            });
        }
        sim.now = ev.time;
        let env = sim.slab[ev.env.0]
            .take()
            .expect("scheduled envelope present");
        sim.free.push(ev.env.0);
        sim.record_trace(ev.time, ev.seq, &env);
        let to = env.receiver;
        if cfg.faults.is_crashed(to, sim.now) {
            continue;
        }
        let step = nodes[to.index()].handle(env);
        sim.absorb(to, step);
    }
    sim.metrics.events = events;
    sim.metrics.trace_digest = hex(&sim.trace.clone().finalize().into());
    if nodes
        .iter()
        .any(|n| correct[n.me().index()] && !n.finished())
    {
        return Err(SimError::Liveness {
            events,
            report: format!("queue drained; {}", stuck_report(&nodes, &correct)),
        });
    }
    Ok(SimOutcome {
        config: cfg.clone(),
        metrics: sim.metrics,
        logs: nodes.iter().map(|n| n.log().to_vec()).collect(),
        observations: sim.observations,
    })
}
