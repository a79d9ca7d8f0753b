//! Binary agreement: an optional one-step phase (W1S at `5f+1`, S1S at
//! `7f+1`) in front of a Cobalt-style backup, with a trusted-dealer coin.
//!
//! Backup round `r` at one replica:
//!
//! 1. `bval(r, est)`; echo `bval(r, b)` after `f+1` copies; add `b` to
//!    `bin_values` after `2f+1` copies.
//! 2. `aux(r, w)` for the first value added to `bin_values`.
//! 3. After `n-f` aux with values in `bin_values`, `conf(r, bin_values)`.
//! 4. After `n-f` conf with sets inside `bin_values`, take their union `U`
//!    and flip `c = coin(r)`. If `U = {v}` then `est = v`, deciding when
//!    `v = c`; otherwise `est = c`.
//!
//! A replica that decided `v` keeps running until the next round whose coin
//! is `v`, where every correct replica is guaranteed to decide, then halts.
//! A replica that decided in the one-step phase stays silent until it sees
//! a backup message, and only then joins round 1 with its decided value.

mod coin;
mod onestep;
mod wire;

pub use coin::CoinSource;
pub use onestep::{onestep_evaluate, OneStepOutcome};
pub use wire::{AbaMessage, AbaWireError, BinSet};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::types::{AbaKind, Deployment, Depth, FaultKind, Outgoing, ReplicaId, Step, Threshold};

/// Backup rounds beyond this are treated as invalid input.
pub const MAX_ROUND: u16 = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbaError {
    #[error("ABA input must be 0 or 1, got {0}")]
    NonBinary(u8),
    #[error("ABA input was already provided")]
    AlreadyProposed,
    #[error("one-step tally must hold exactly {expected} votes, got {got}")]
    TallySize { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbaConfig {
    pub dep: Deployment,
    pub kind: AbaKind,
    pub epoch: u64,
    pub instance: u16,
    pub coin: CoinSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbaDecision {
    pub value: bool,
    pub depth: Depth,
    /// Backup round of the decision; 0 for a one-step decision.
    pub round: u16,
}

impl AbaDecision {
    pub fn one_step(&self) -> bool {
        self.round == 0
    }
}

pub type AbaStep = Step<AbaMessage, AbaDecision>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Idle,
    OneStep,
    /// Decided in one step; waiting for a backup message before joining.
    Lazy,
    Backup,
    Halted,
}

#[derive(Debug, Default)]
struct RoundState {
    bval: [Vec<Depth>; 2],
    bval_from: [BTreeSet<ReplicaId>; 2],
    bval_sent: [bool; 2],
    bin_values: BinSet,
    bin_depth: [Depth; 2],
    aux: Vec<(bool, Depth)>,
    aux_from: BTreeMap<ReplicaId, bool>,
    aux_sent: bool,
    conf: Vec<(BinSet, Depth)>,
    conf_from: BTreeMap<ReplicaId, BinSet>,
    conf_sent: bool,
    done: bool,
}

#[derive(Debug)]
pub struct AbaInstance {
    cfg: AbaConfig,
    me: ReplicaId,
    mode: Mode,
    proposed: Option<(bool, Depth)>,
    onestep: Vec<(bool, Depth)>,
    onestep_from: BTreeSet<ReplicaId>,
    est: bool,
    round: u16,
    rounds: BTreeMap<u16, RoundState>,
    decided: Option<AbaDecision>,
    /// Depth of the first backup message received, if any.
    backup_seen: Option<Depth>,
}

impl AbaInstance {
    pub fn new(cfg: AbaConfig, me: ReplicaId) -> Self {
        assert!(cfg.dep.contains(me), "{me} outside the deployment");
        AbaInstance {
            cfg,
            me,
            mode: Mode::Idle,
            proposed: None,
            onestep: Vec::new(),
            onestep_from: BTreeSet::new(),
            est: false,
            round: 0,
            rounds: BTreeMap::new(),
            decided: None,
            backup_seen: None,
        }
    }

    pub fn me(&self) -> ReplicaId {
        self.me
    }

    pub fn proposed(&self) -> Option<bool> {
        self.proposed.map(|(v, _)| v)
    }

    pub fn decision(&self) -> Option<AbaDecision> {
        self.decided
    }

    pub fn halted(&self) -> bool {
        self.mode == Mode::Halted
    }

    /// Current backup round; 0 while still in the one-step phase.
    pub fn round(&self) -> u16 {
        self.round
    }

    fn threshold(&self, t: Threshold) -> usize {
        self.cfg.dep.threshold(t)
    }

    fn broadcast(&self, message: AbaMessage, depth: Depth) -> Vec<Outgoing<AbaMessage>> {
        self.cfg
            .dep
            .replicas()
            .map(|to| Outgoing { to, message, depth })
            .collect()
    }

    pub fn propose(&mut self, v: u8, base: Depth) -> Result<AbaStep, AbaError> {
        let v = match v {
            0 => false,
            1 => true,
            other => return Err(AbaError::NonBinary(other)),
        };
        if self.proposed.is_some() {
            return Err(AbaError::AlreadyProposed);
        }
        self.proposed = Some((v, base));
        self.est = v;
        if self.cfg.kind.one_step() {
            self.mode = Mode::OneStep;
            let mut step = AbaStep {
                messages: self.broadcast(AbaMessage::OneStep(v), base.next()),
                ..AbaStep::default()
            };
            step.extend(self.evaluate_onestep());
            Ok(step)
        } else {
            Ok(self.start_backup(base))
        }
    }

    pub fn handle(&mut self, from: ReplicaId, msg: AbaMessage, depth: Depth) -> AbaStep {
        if self.mode == Mode::Halted || !self.cfg.dep.contains(from) {
            return AbaStep::default();
        }
        if let AbaMessage::OneStep(v) = msg {
            return self.on_onestep(from, v, depth);
        }
        let round = msg.round();
        if round == 0 || round > MAX_ROUND {
            return AbaStep::fault(from, FaultKind::InvalidValue);
        }
        if let Err(kind) = self.record(from, msg, depth) {
            return AbaStep::fault(from, kind);
        }
        self.backup_seen.get_or_insert(depth);
        match self.mode {
            Mode::Lazy => {
                let d = self
                    .decided
                    .expect("lazy implies decided")
                    .depth
                    .join(depth);
                self.start_backup(d)
            }
            Mode::Backup if round == self.round => self.progress(),
            Mode::Backup if round < self.round => self.amplify_past(round),
            _ => AbaStep::default(),
        }
    }

    fn on_onestep(&mut self, from: ReplicaId, v: bool, depth: Depth) -> AbaStep {
        if !self.cfg.kind.one_step() {
            return AbaStep::fault(from, FaultKind::UnexpectedKind);
        }
        if !self.onestep_from.insert(from) {
            return AbaStep::fault(from, FaultKind::Duplicate);
        }
        // Votes beyond the first n - f are ignored.
        if self.onestep.len() < self.threshold(Threshold::NMinusF) {
            self.onestep.push((v, depth));
        }
        self.evaluate_onestep()
    }

    fn evaluate_onestep(&mut self) -> AbaStep {
        let quorum = self.threshold(Threshold::NMinusF);
        if self.mode != Mode::OneStep || self.onestep.len() < quorum {
            return AbaStep::default();
        }
        let (proposed, base) = self.proposed.expect("one-step mode implies proposed");
        let ones = self.onestep.iter().filter(|(v, _)| *v).count();
        let d = Depth::join_all(self.onestep.iter().map(|(_, d)| *d)).join(base);
        let outcome =
            onestep_evaluate(&self.cfg.dep, quorum - ones, ones).expect("exactly n - f votes");
        match outcome {
            OneStepOutcome::Decide(v) => {
                self.est = v;
                let decision = AbaDecision {
                    value: v,
                    depth: d,
                    round: 0,
                };
                self.decided = Some(decision);
                self.mode = Mode::Lazy;
                let mut step = match self.backup_seen {
                    Some(seen) => self.start_backup(d.join(seen)),
                    None => AbaStep::default(),
                };
                step.output = Some(decision);
                step
            }
            OneStepOutcome::Adopt(v) => {
                self.est = v;
                self.start_backup(d)
            }
            OneStepOutcome::Fallthrough => {
                self.est = proposed;
                self.start_backup(d)
            }
        }
    }

    fn start_backup(&mut self, d: Depth) -> AbaStep {
        self.mode = Mode::Backup;
        self.round = 1;
        let mut step = self.send_bval(1, self.est, d.next());
        step.extend(self.progress());
        step
    }

    fn send_bval(&mut self, round: u16, value: bool, depth: Depth) -> AbaStep {
        let st = self.rounds.entry(round).or_default();
        if st.bval_sent[usize::from(value)] {
            return AbaStep::default();
        }
        st.bval_sent[usize::from(value)] = true;
        AbaStep {
            messages: self.broadcast(AbaMessage::Bval { round, value }, depth),
            ..AbaStep::default()
        }
    }

    fn record(&mut self, from: ReplicaId, msg: AbaMessage, depth: Depth) -> Result<(), FaultKind> {
        let st = self.rounds.entry(msg.round()).or_default();
        match msg {
            AbaMessage::Bval { value, .. } => {
                let b = usize::from(value);
                if !st.bval_from[b].insert(from) {
                    return Err(FaultKind::Duplicate);
                }
                st.bval[b].push(depth);
            }
            AbaMessage::Aux { value, .. } => {
                if let Some(&prev) = st.aux_from.get(&from) {
                    return Err(if prev == value {
                        FaultKind::Duplicate
                    } else {
                        FaultKind::InvalidValue
                    });
                }
                st.aux_from.insert(from, value);
                st.aux.push((value, depth));
            }
            AbaMessage::Conf { values, .. } => {
                if values.is_empty() {
                    return Err(FaultKind::InvalidValue);
                }
                if let Some(&prev) = st.conf_from.get(&from) {
                    return Err(if prev == values {
                        FaultKind::Duplicate
                    } else {
                        FaultKind::InvalidValue
                    });
                }
                st.conf_from.insert(from, values);
                st.conf.push((values, depth));
            }
            AbaMessage::OneStep(_) => unreachable!("handled separately"),
        }
        Ok(())
    }

    /// Keeps echoing `bval` in finished rounds so slower replicas can
    /// still fill their `bin_values`.
    fn amplify_past(&mut self, round: u16) -> AbaStep {
        let amplify = self.threshold(Threshold::FPlus1);
        let mut step = AbaStep::default();
        for value in [false, true] {
            let st = &self.rounds[&round];
            let b = usize::from(value);
            if st.bval[b].len() >= amplify && !st.bval_sent[b] {
                let d = Depth::join_all(st.bval[b].iter().take(amplify).copied());
                step.extend(self.send_bval(round, value, d.next()));
            }
        }
        step
    }

    fn progress(&mut self) -> AbaStep {
        let accept = self.threshold(Threshold::TwoFPlus1);
        let quorum = self.threshold(Threshold::NMinusF);
        let mut step = AbaStep::default();
        while self.mode == Mode::Backup {
            let r = self.round;
            step.extend(self.amplify_past(r));
            let est = self.est;
            let st = self.rounds.entry(r).or_default();
            for value in [false, true] {
                let b = usize::from(value);
                if st.bval[b].len() >= accept && !st.bin_values.contains(value) {
                    st.bin_values.insert(value);
                    st.bin_depth[b] = Depth::join_all(st.bval[b].iter().take(accept).copied());
                }
            }
            let bin = st.bin_values;
            if !st.aux_sent && !bin.is_empty() {
                st.aux_sent = true;
                let w = bin.single_value().unwrap_or(est);
                let d = st.bin_depth[usize::from(w)].next();
                step.messages
                    .extend(self.broadcast(AbaMessage::Aux { round: r, value: w }, d));
            }
            let st = self.rounds.get_mut(&r).expect("round exists");
            if st.aux_sent && !st.conf_sent {
                let qualifying: Vec<&(bool, Depth)> = st
                    .aux
                    .iter()
                    .filter(|(v, _)| bin.contains(*v))
                    .take(quorum)
                    .collect();
                if qualifying.len() >= quorum {
                    st.conf_sent = true;
                    let mut d = Depth::join_all(qualifying.iter().map(|(_, d)| *d));
                    for (v, _) in &qualifying {
                        d = d.join(st.bin_depth[usize::from(*v)]);
                    }
                    step.messages.extend(self.broadcast(
                        AbaMessage::Conf {
                            round: r,
                            values: bin,
                        },
                        d.next(),
                    ));
                }
            }
            let st = self.rounds.get_mut(&r).expect("round exists");
            if !st.conf_sent || st.done {
                break;
            }
            let qualifying: Vec<&(BinSet, Depth)> = st
                .conf
                .iter()
                .filter(|(s, _)| s.is_subset(bin))
                .take(quorum)
                .collect();
            if qualifying.len() < quorum {
                break;
            }
            st.done = true;
            let union = qualifying
                .iter()
                .fold(BinSet::EMPTY, |u, (s, _)| u.union(*s));
            let d = Depth::join_all(qualifying.iter().map(|(_, d)| *d));
            let c = self.cfg.coin.coin(self.cfg.epoch, self.cfg.instance, r);
            match union.single_value() {
                Some(v) => {
                    self.est = v;
                    if v == c && self.decided.is_none() {
                        let decision = AbaDecision {
                            value: v,
                            depth: d,
                            round: r,
                        };
                        self.decided = Some(decision);
                        step.output = Some(decision);
                    }
                }
                None => self.est = c,
            }
            if let Some(dec) = self.decided {
                if dec.round < r && dec.value == c {
                    self.mode = Mode::Halted;
                    break;
                }
            }
            if r >= MAX_ROUND {
                break;
            }
            self.round = r + 1;
            step.extend(self.send_bval(r + 1, self.est, d.next()));
        }
        step
    }
}
