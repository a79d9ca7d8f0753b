//! The epoch engine: `n` broadcasts and `n` binary agreements per epoch.
//!
//! Each replica broadcasts a proposal drawn from its buffer. A delivered
//! broadcast `j` votes 1 into agreement `j`; once `n - f` agreements have
//! decided 1, every agreement still without input gets 0. The epoch output
//! is the union of the proposals whose agreement decided 1, ordered by
//! proposer and then position, with duplicate transaction ids dropped.

mod proposal;

pub use proposal::{
    decode_proposal, encode_proposal, proposal_size, select_proposal, ProposalError,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};

use crate::aba::{AbaConfig, AbaDecision, AbaInstance, AbaMessage, CoinSource};
use crate::rbc::{RbcConfig, RbcDelivery, RbcInstance, RbcMessage};
use crate::types::{
    ConfigError, Deployment, Depth, Fault, FaultKind, InstanceTag, MessageEnvelope, Outgoing,
    Payload, Phase, ProtocolSpec, ReplicaId, Threshold, Transaction,
};

/// Parameters shared by every replica of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcsParams {
    pub spec: ProtocolSpec,
    pub dep: Deployment,
    /// Global batch size `B`.
    pub batch_size: usize,
    pub epochs: u64,
    pub seed: u64,
}

impl AcsParams {
    pub fn new(
        spec: ProtocolSpec,
        dep: Deployment,
        batch_size: usize,
        epochs: u64,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        if dep.resilience() != spec.resilience {
            return Err(ConfigError::Invalid(format!(
                "{} needs resilience {}, deployment has {}",
                spec.name,
                spec.resilience,
                dep.resilience()
            )));
        }
        if dep.n() > u16::MAX as usize {
            return Err(ConfigError::Invalid(format!(
                "n = {} is too large",
                dep.n()
            )));
        }
        Ok(AcsParams {
            spec,
            dep,
            batch_size,
            epochs,
            seed,
        })
    }
}

/// Something observable happened at one replica.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AcsEvent {
    EpochStarted {
        epoch: u64,
    },
    RbcDelivered {
        epoch: u64,
        instance: usize,
        value: Vec<u8>,
        depth: Depth,
    },
    AbaInput {
        epoch: u64,
        instance: usize,
        value: bool,
    },
    AbaDecided {
        epoch: u64,
        instance: usize,
        decision: AbaDecision,
    },
    EpochFinalized(EpochOutput),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochOutput {
    pub epoch: u64,
    pub batch: Vec<Transaction>,
    pub verdicts: Vec<bool>,
    /// Epoch-level causal depth at finalization.
    pub depth: Depth,
}

impl EpochOutput {
    pub fn verdict_ones(&self) -> usize {
        self.verdicts.iter().filter(|v| **v).count()
    }
}

#[derive(Debug, Default)]
pub struct AcsStep {
    pub messages: Vec<MessageEnvelope>,
    pub events: Vec<AcsEvent>,
    pub faults: Vec<Fault>,
}

impl AcsStep {
    fn extend(&mut self, other: AcsStep) {
        self.messages.extend(other.messages);
        self.events.extend(other.events);
        self.faults.extend(other.faults);
    }
}

/// Per-epoch state at one replica.
#[derive(Debug)]
pub struct EpochState {
    pub epoch: u64,
    rbc: Vec<RbcInstance>,
    aba: Vec<AbaInstance>,
    values: Vec<Option<(Vec<u8>, Depth)>>,
    aba_fed: Vec<bool>,
    verdicts: Vec<Option<AbaDecision>>,
    zeros_fed: bool,
    started: bool,
    output: Option<EpochOutput>,
}

impl EpochState {
    fn new(params: &AcsParams, me: ReplicaId, epoch: u64) -> Self {
        let n = params.dep.n();
        let coin = CoinSource::from_u64(params.seed);
        let rbc = params
            .dep
            .replicas()
            .map(|sender| {
                let cfg = RbcConfig::new(params.dep, sender, params.spec.rbc)
                    .expect("validated deployment");
                RbcInstance::new(cfg, me)
            })
            .collect();
        let aba = (0..n)
            .map(|j| {
                let cfg = AbaConfig {
                    dep: params.dep,
                    kind: params.spec.aba,
                    epoch,
                    instance: j as u16,
                    coin: coin.clone(),
                };
                AbaInstance::new(cfg, me)
            })
            .collect();
        EpochState {
            epoch,
            rbc,
            aba,
            values: vec![None; n],
            aba_fed: vec![false; n],
            verdicts: vec![None; n],
            zeros_fed: false,
            started: false,
            output: None,
        }
    }

    pub fn rbc(&self, j: usize) -> &RbcInstance {
        &self.rbc[j]
    }

    pub fn aba(&self, j: usize) -> &AbaInstance {
        &self.aba[j]
    }

    pub fn output(&self) -> Option<&EpochOutput> {
        self.output.as_ref()
    }

    pub fn verdict_ones(&self) -> usize {
        self.verdicts.iter().flatten().filter(|d| d.value).count()
    }
}

/// One replica running consecutive epochs.
#[derive(Debug)]
pub struct AcsNode {
    me: ReplicaId,
    params: AcsParams,
    buffer: Vec<Transaction>,
    epochs: BTreeMap<u64, EpochState>,
    /// Next epoch to finalize.
    next: u64,
    log: Vec<EpochOutput>,
}

fn wrap_rbc(
    me: ReplicaId,
    epoch: u64,
    j: usize,
    out: Vec<Outgoing<RbcMessage>>,
) -> Vec<MessageEnvelope> {
    out.into_iter()
        .map(|o| MessageEnvelope {
            sender: me,
            receiver: o.to,
            epoch,
            instance: InstanceTag::rbc(j),
            payload: Payload::Rbc(o.message),
            depth: o.depth,
        })
        .collect()
}

fn wrap_aba(
    me: ReplicaId,
    epoch: u64,
    j: usize,
    out: Vec<Outgoing<AbaMessage>>,
) -> Vec<MessageEnvelope> {
    out.into_iter()
        .map(|o| MessageEnvelope {
            sender: me,
            receiver: o.to,
            epoch,
            instance: InstanceTag::aba(j),
            payload: Payload::Aba(o.message),
            depth: o.depth,
        })
        .collect()
}

impl AcsNode {
    pub fn new(me: ReplicaId, params: AcsParams, buffer: Vec<Transaction>) -> Self {
        assert!(params.dep.contains(me), "{me} outside the deployment");
        AcsNode {
            me,
            params,
            buffer,
            epochs: BTreeMap::new(),
            next: 0,
            log: Vec::new(),
        }
    }

    pub fn me(&self) -> ReplicaId {
        self.me
    }

    pub fn params(&self) -> &AcsParams {
        &self.params
    }

    pub fn buffer(&self) -> &[Transaction] {
        &self.buffer
    }

    /// Finalized epochs, in order.
    pub fn log(&self) -> &[EpochOutput] {
        &self.log
    }

    pub fn finished(&self) -> bool {
        self.next >= self.params.epochs
    }

    pub fn epoch(&self, epoch: u64) -> Option<&EpochState> {
        self.epochs.get(&epoch)
    }

    /// Adds client transactions to the local buffer.
    pub fn submit(&mut self, txs: impl IntoIterator<Item = Transaction>) {
        self.buffer.extend(txs);
    }

    fn state(&mut self, epoch: u64) -> &mut EpochState {
        let (params, me) = (&self.params, self.me);
        self.epochs
            .entry(epoch)
            .or_insert_with(|| EpochState::new(params, me, epoch))
    }

    fn proposal_rng(&self, epoch: u64) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(b"mib-proposal");
        h.update(self.params.seed.to_be_bytes());
        h.update(self.me.0.to_be_bytes());
        h.update(epoch.to_be_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    /// Starts the first epoch.
    pub fn start(&mut self) -> AcsStep {
        if self.params.epochs == 0 {
            return AcsStep::default();
        }
        self.start_epoch(0)
    }

    fn start_epoch(&mut self, epoch: u64) -> AcsStep {
        let mut rng = self.proposal_rng(epoch);
        let proposal = select_proposal(
            &self.buffer,
            self.params.batch_size,
            self.params.dep.n(),
            &mut rng,
        );
        let bytes = encode_proposal(&proposal);
        let me = self.me;
        let st = self.state(epoch);
        debug_assert!(!st.started, "epoch {epoch} started twice");
        st.started = true;
        let rbc_step = st.rbc[me.index()]
            .input(&bytes, Depth::ZERO)
            .expect("own broadcast takes one non-empty input");
        let mut step = AcsStep {
            events: vec![AcsEvent::EpochStarted { epoch }],
            ..AcsStep::default()
        };
        step.extend(self.absorb_rbc(epoch, me.index(), rbc_step));
        step
    }

    pub fn handle(&mut self, env: MessageEnvelope) -> AcsStep {
        let n = self.params.dep.n();
        let j = env.instance.index as usize;
        if env.epoch >= self.params.epochs || j >= n || !self.params.dep.contains(env.sender) {
            return AcsStep {
                faults: vec![Fault {
                    from: env.sender,
                    kind: FaultKind::InvalidValue,
                }],
                ..AcsStep::default()
            };
        }
        let epoch = env.epoch;
        match (env.instance.phase, env.payload) {
            (Phase::Rbc, Payload::Rbc(msg)) => {
                let step = self.state(epoch).rbc[j].handle(env.sender, msg, env.depth);
                self.absorb_rbc(epoch, j, step)
            }
            (Phase::Aba, Payload::Aba(msg)) => {
                let step = self.state(epoch).aba[j].handle(env.sender, msg, env.depth);
                self.absorb_aba(epoch, j, step)
            }
            _ => AcsStep {
                faults: vec![Fault {
                    from: env.sender,
                    kind: FaultKind::UnexpectedKind,
                }],
                ..AcsStep::default()
            },
        }
    }

    fn absorb_rbc(&mut self, epoch: u64, j: usize, step: crate::rbc::RbcStep) -> AcsStep {
        let mut out = AcsStep {
            messages: wrap_rbc(self.me, epoch, j, step.messages),
            faults: step.faults,
            ..AcsStep::default()
        };
        if let Some(delivery) = step.output {
            out.extend(self.on_rbc_deliver(epoch, j, delivery));
        }
        out
    }

    fn absorb_aba(&mut self, epoch: u64, j: usize, step: crate::aba::AbaStep) -> AcsStep {
        let mut out = AcsStep {
            messages: wrap_aba(self.me, epoch, j, step.messages),
            faults: step.faults,
            ..AcsStep::default()
        };
        if let Some(decision) = step.output {
            out.extend(self.on_aba_decide(epoch, j, decision));
        }
        out
    }

    fn feed_aba(&mut self, epoch: u64, j: usize, value: bool, base: Depth) -> AcsStep {
        let st = self.state(epoch);
        if st.aba_fed[j] {
            return AcsStep::default();
        }
        st.aba_fed[j] = true;
        let step = st.aba[j]
            .propose(u8::from(value), base)
            .expect("each agreement is fed once");
        let mut out = AcsStep {
            events: vec![AcsEvent::AbaInput {
                epoch,
                instance: j,
                value,
            }],
            ..AcsStep::default()
        };
        out.extend(self.absorb_aba(epoch, j, step));
        out
    }

    fn on_rbc_deliver(&mut self, epoch: u64, j: usize, delivery: RbcDelivery) -> AcsStep {
        let st = self.state(epoch);
        assert!(st.values[j].is_none(), "broadcast {j} delivered twice");
        st.values[j] = Some((delivery.value.clone(), delivery.depth));
        let mut out = AcsStep {
            events: vec![AcsEvent::RbcDelivered {
                epoch,
                instance: j,
                value: delivery.value,
                depth: delivery.depth,
            }],
            ..AcsStep::default()
        };
        out.extend(self.feed_aba(epoch, j, true, Depth::local(delivery.depth.chain)));
        out.extend(self.try_finalize());
        out
    }

    fn on_aba_decide(&mut self, epoch: u64, j: usize, decision: AbaDecision) -> AcsStep {
        let quorum = self.params.dep.threshold(Threshold::NMinusF);
        let n = self.params.dep.n();
        let st = self.state(epoch);
        assert!(st.verdicts[j].is_none(), "agreement {j} decided twice");
        st.verdicts[j] = Some(decision);
        let mut out = AcsStep {
            events: vec![AcsEvent::AbaDecided {
                epoch,
                instance: j,
                decision,
            }],
            ..AcsStep::default()
        };
        if !st.zeros_fed && st.verdict_ones() >= quorum {
            st.zeros_fed = true;
            let chain = st
                .verdicts
                .iter()
                .flatten()
                .filter(|d| d.value)
                .map(|d| d.depth.chain)
                .max()
                .unwrap_or(0);
            for k in 0..n {
                out.extend(self.feed_aba(epoch, k, false, Depth::local(chain)));
            }
        }
        out.extend(self.try_finalize());
        out
    }

    /// Finalizes epochs in order while their outputs are complete, starting
    /// the next epoch after each.
    fn try_finalize(&mut self) -> AcsStep {
        let mut out = AcsStep::default();
        while self.next < self.params.epochs {
            let epoch = self.next;
            let Some(st) = self.epochs.get_mut(&epoch) else {
                break;
            };
            if !st.started || st.verdicts.iter().any(Option::is_none) {
                break;
            }
            let ready = st
                .verdicts
                .iter()
                .zip(&st.values)
                .all(|(d, v)| !d.expect("all decided").value || v.is_some());
            if !ready {
                break;
            }
            let mut seen = BTreeSet::new();
            let mut batch = Vec::new();
            let mut depth = Depth::ZERO;
            for (d, v) in st.verdicts.iter().zip(&st.values) {
                let d = d.expect("all decided");
                depth = depth.join(d.depth);
                if !d.value {
                    continue;
                }
                let (bytes, vdepth) = v.as_ref().expect("checked above");
                depth = depth.join(*vdepth);
                // An undecodable proposal counts as an empty batch.
                for tx in decode_proposal(bytes).unwrap_or_default() {
                    if seen.insert(tx.id) {
                        batch.push(tx);
                    }
                }
            }
            let output = EpochOutput {
                epoch,
                batch,
                verdicts: st
                    .verdicts
                    .iter()
                    .map(|d| d.expect("all decided").value)
                    .collect(),
                depth,
            };
            st.output = Some(output.clone());
            self.buffer.retain(|tx| !seen.contains(&tx.id));
            self.log.push(output.clone());
            out.events.push(AcsEvent::EpochFinalized(output));
            self.next += 1;
            if self.next < self.params.epochs {
                out.extend(self.start_epoch(self.next));
            }
        }
        out
    }
}
