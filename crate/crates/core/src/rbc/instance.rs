use std::collections::{BTreeMap, BTreeSet};

use super::{RbcConfig, RbcError, RbcMessage, RbcMessageKind};
use crate::coding::{
    self, merkle_build, merkle_verify, CodedBlock, Digest, MerkleProof, MerkleTree,
};
use crate::types::{Depth, FaultKind, Outgoing, RbcKind, ReplicaId, Step, Threshold};

/// A delivered broadcast value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbcDelivery {
    pub value: Vec<u8>,
    pub root: Digest,
    pub depth: Depth,
}

pub type RbcStep = Step<RbcMessage, RbcDelivery>;

#[derive(Debug, Clone)]
struct Contribution {
    block: CodedBlock,
    depth: Depth,
}

#[derive(Debug, Default)]
struct RootState {
    /// Witness (MBC) or echo (AVID) blocks, in arrival order.
    blocks: Vec<Contribution>,
    /// Cached root-consistency verdict.
    verdict: Option<bool>,
    /// This replica's own block and proof under this root.
    own: Option<(MerkleProof, Vec<u8>)>,
    /// AVID `ready(h)` senders in arrival order.
    readies: Vec<Depth>,
    /// Blocks received by a learner via `ready` (MBC-L) or `val` (AVID-L).
    learned: Vec<Contribution>,
}

fn join_first(depths: impl Iterator<Item = Depth>, count: usize) -> Depth {
    Depth::join_all(depths.take(count))
}

/// State machine of one broadcast instance at one replica.
#[derive(Debug)]
pub struct RbcInstance {
    cfg: RbcConfig,
    me: ReplicaId,
    my_pos: Option<usize>,
    input_given: bool,
    init_seen: bool,
    /// Witness (MBC) or echo (AVID) sent.
    first_sent: bool,
    ready_sent: bool,
    roots: BTreeMap<Digest, RootState>,
    block_from: BTreeMap<ReplicaId, Digest>,
    ready_from: BTreeMap<ReplicaId, Digest>,
    learned_from: BTreeSet<ReplicaId>,
    delivered: Option<Digest>,
    aborted: bool,
}

impl RbcInstance {
    pub fn new(cfg: RbcConfig, me: ReplicaId) -> Self {
        assert!(cfg.dep.contains(me), "{me} outside the deployment");
        let my_pos = cfg.position(me);
        RbcInstance {
            cfg,
            me,
            my_pos,
            input_given: false,
            init_seen: false,
            first_sent: false,
            ready_sent: false,
            roots: BTreeMap::new(),
            block_from: BTreeMap::new(),
            ready_from: BTreeMap::new(),
            learned_from: BTreeSet::new(),
            delivered: None,
            aborted: false,
        }
    }

    pub fn config(&self) -> &RbcConfig {
        &self.cfg
    }

    pub fn is_active(&self) -> bool {
        self.my_pos.is_some()
    }

    pub fn delivered_root(&self) -> Option<Digest> {
        self.delivered
    }

    pub fn aborted(&self) -> bool {
        self.aborted
    }

    fn is_mbc(&self) -> bool {
        matches!(self.cfg.variant, RbcKind::Mbc | RbcKind::MbcL)
    }

    fn n1(&self) -> usize {
        self.cfg.n1()
    }

    fn k(&self) -> usize {
        self.cfg.threshold(Threshold::N1Minus2F { n1: self.n1() })
    }

    fn quorum(&self) -> usize {
        self.cfg.threshold(Threshold::N1MinusF { n1: self.n1() })
    }

    fn to_active(&self, message: RbcMessage, depth: Depth) -> Vec<Outgoing<RbcMessage>> {
        self.cfg
            .active_set
            .iter()
            .map(|&to| Outgoing {
                to,
                message: message.clone(),
                depth,
            })
            .collect()
    }

    fn to_learners(&self, message: RbcMessage, depth: Depth) -> Vec<Outgoing<RbcMessage>> {
        self.cfg
            .learners()
            .map(|to| Outgoing {
                to,
                message: message.clone(),
                depth,
            })
            .collect()
    }

    /// Sender side: encode, commit, and disperse one block per active replica.
    pub fn input(&mut self, value: &[u8], base: Depth) -> Result<RbcStep, RbcError> {
        if self.me != self.cfg.sender {
            return Err(RbcError::NotSender {
                me: self.me,
                sender: self.cfg.sender,
            });
        }
        if self.input_given {
            return Err(RbcError::AlreadyInput);
        }
        let blocks = coding::encode(value, self.k(), self.n1())?;
        let datas: Vec<&[u8]> = blocks.iter().map(|b| b.data.as_slice()).collect();
        let (_, proofs) = merkle_build(&datas)?;
        self.input_given = true;
        let kind = if self.is_mbc() {
            RbcMessageKind::Init
        } else {
            RbcMessageKind::Send
        };
        let active = self.cfg.wire_active_set();
        let depth = base.next();
        let messages = self
            .cfg
            .active_set
            .iter()
            .zip(blocks.into_iter().zip(proofs))
            .map(|(&to, (block, proof))| Outgoing {
                to,
                message: RbcMessage::with_block(kind, &proof, block.data)
                    .with_active_set(active.clone()),
                depth,
            })
            .collect();
        Ok(Step {
            messages,
            ..Step::default()
        })
    }

    /// Handles one received message.
    pub fn handle(&mut self, from: ReplicaId, msg: RbcMessage, depth: Depth) -> RbcStep {
        if self.aborted || !self.cfg.dep.contains(from) {
            return RbcStep::default();
        }
        use RbcKind::*;
        use RbcMessageKind::*;
        match (self.cfg.variant, msg.kind) {
            (Mbc | MbcL, Init) | (Avid | AvidL, Send) => self.on_init(from, msg, depth),
            (Mbc | MbcL, Witness) | (Avid | AvidL, Echo) => self.on_block(from, msg, depth),
            (Avid | AvidL, Ready) => self.on_ready(from, msg, depth),
            (MbcL, Ready) | (AvidL, Val) => self.on_learned(from, msg, depth),
            _ => RbcStep::fault(from, FaultKind::UnexpectedKind),
        }
    }

    fn check_active_set(&self, msg: &RbcMessage) -> Result<(), FaultKind> {
        if msg.active_set == self.cfg.wire_active_set() {
            Ok(())
        } else {
            Err(FaultKind::BadActiveSet)
        }
    }

    fn check_block(&self, msg: &RbcMessage, expected_leaf: usize) -> Result<(), FaultKind> {
        if msg.leaf_index as usize != expected_leaf {
            return Err(FaultKind::WrongLeafIndex);
        }
        if !merkle_verify(&msg.root, &msg.proof(), &msg.block) {
            return Err(FaultKind::InvalidProof);
        }
        Ok(())
    }

    fn on_init(&mut self, from: ReplicaId, msg: RbcMessage, depth: Depth) -> RbcStep {
        if from != self.cfg.sender {
            return RbcStep::fault(from, FaultKind::NotFromSender);
        }
        let Some(pos) = self.my_pos else {
            return RbcStep::fault(from, FaultKind::NotActive);
        };
        if let Err(kind) = self
            .check_active_set(&msg)
            .and_then(|_| self.check_block(&msg, pos))
        {
            return RbcStep::fault(from, kind);
        }
        if self.init_seen {
            return RbcStep::fault(from, FaultKind::Duplicate);
        }
        self.init_seen = true;
        let proof = msg.proof();
        let st = self.roots.entry(msg.root).or_default();
        if st.own.is_none() {
            st.own = Some((proof, msg.block.clone()));
        }
        let mut step = RbcStep::default();
        if !self.first_sent {
            self.first_sent = true;
            let kind = if self.is_mbc() {
                RbcMessageKind::Witness
            } else {
                RbcMessageKind::Echo
            };
            let out = RbcMessage { kind, ..msg };
            step.messages = self.to_active(out, depth.next());
        }
        step
    }

    fn on_block(&mut self, from: ReplicaId, msg: RbcMessage, depth: Depth) -> RbcStep {
        let Some(pos) = self.cfg.position(from) else {
            return RbcStep::fault(from, FaultKind::NotActive);
        };
        if self.my_pos.is_none() {
            return RbcStep::fault(from, FaultKind::NotActive);
        }
        if let Err(kind) = self
            .check_active_set(&msg)
            .and_then(|_| self.check_block(&msg, pos))
        {
            return RbcStep::fault(from, kind);
        }
        if let Some(prev) = self.block_from.get(&from) {
            let kind = if *prev == msg.root {
                FaultKind::Duplicate
            } else {
                FaultKind::ConflictingRoot
            };
            return RbcStep::fault(from, kind);
        }
        self.block_from.insert(from, msg.root);
        let root = msg.root;
        self.roots
            .entry(root)
            .or_default()
            .blocks
            .push(Contribution {
                block: CodedBlock {
                    index: pos,
                    data: msg.block,
                },
                depth,
            });
        if self.is_mbc() {
            self.progress_mbc(root)
        } else {
            self.progress_avid_echo(root)
        }
    }

    /// Runs the root-consistency check once per root: re-encode from
    /// `n1 - 2f` blocks and compare the recomputed Merkle root.
    fn check_root(&mut self, root: &Digest) -> bool {
        let (k, total, my_pos) = (self.k(), self.n1(), self.my_pos);
        let st = self.roots.get_mut(root).expect("root state exists");
        if let Some(v) = st.verdict {
            return v;
        }
        let ok = match coding::reencode(st.blocks.iter().map(|c| &c.block), k, total) {
            Ok(all) => {
                let datas: Vec<&[u8]> = all.iter().map(|b| b.data.as_slice()).collect();
                let tree = MerkleTree::new(&datas).expect("non-empty");
                let ok = tree.root() == *root;
                if let (true, Some(p), None) = (ok, my_pos, &st.own) {
                    st.own = Some((tree.proof(p), all[p].data.clone()));
                }
                ok
            }
            Err(_) => false,
        };
        st.verdict = Some(ok);
        ok
    }

    fn own_block(&self, root: &Digest) -> Option<(MerkleProof, Vec<u8>)> {
        self.roots.get(root).and_then(|st| st.own.clone())
    }

    fn decode_root(&self, root: &Digest) -> Option<Vec<u8>> {
        let st = self.roots.get(root)?;
        coding::decode(st.blocks.iter().map(|c| &c.block), self.k(), self.n1()).ok()
    }

    fn progress_mbc(&mut self, root: Digest) -> RbcStep {
        let (k, quorum) = (self.k(), self.quorum());
        let mut step = RbcStep::default();
        let (count, verdict) = {
            let st = &self.roots[&root];
            (st.blocks.len(), st.verdict)
        };
        if count >= k && verdict.is_none() {
            let d = join_first(self.roots[&root].blocks.iter().map(|c| c.depth), k);
            if !self.check_root(&root) {
                self.aborted = true;
                return step;
            }
            if !self.first_sent {
                if let Some((proof, block)) = self.own_block(&root) {
                    self.first_sent = true;
                    let msg = RbcMessage::with_block(RbcMessageKind::Witness, &proof, block)
                        .with_active_set(self.cfg.wire_active_set());
                    step.messages.extend(self.to_active(msg, d.next()));
                }
            }
        }
        let st = &self.roots[&root];
        if st.blocks.len() >= quorum && st.verdict == Some(true) && self.delivered.is_none() {
            let d = join_first(st.blocks.iter().map(|c| c.depth), quorum);
            let Some(value) = self.decode_root(&root) else {
                self.aborted = true;
                return step;
            };
            self.delivered = Some(root);
            if self.cfg.variant == RbcKind::MbcL {
                if let Some((proof, block)) = self.own_block(&root) {
                    let msg = RbcMessage::with_block(RbcMessageKind::Ready, &proof, block);
                    step.messages.extend(self.to_learners(msg, d.next()));
                }
            }
            step.output = Some(RbcDelivery {
                value,
                root,
                depth: d,
            });
        }
        step
    }

    fn progress_avid_echo(&mut self, root: Digest) -> RbcStep {
        let quorum = self.quorum();
        let mut step = RbcStep::default();
        let st = &self.roots[&root];
        if st.blocks.len() >= quorum && st.verdict.is_none() {
            let d = join_first(st.blocks.iter().map(|c| c.depth), quorum);
            if !self.check_root(&root) {
                self.aborted = true;
                return step;
            }
            if !self.ready_sent {
                self.ready_sent = true;
                let msg = RbcMessage::ready(root).with_active_set(self.cfg.wire_active_set());
                step.messages.extend(self.to_active(msg, d.next()));
            }
        }
        step.extend(self.try_deliver_avid(root));
        step
    }

    fn on_ready(&mut self, from: ReplicaId, msg: RbcMessage, depth: Depth) -> RbcStep {
        if !self.cfg.is_active(from) || self.my_pos.is_none() {
            return RbcStep::fault(from, FaultKind::NotActive);
        }
        if let Err(kind) = self.check_active_set(&msg) {
            return RbcStep::fault(from, kind);
        }
        if let Some(prev) = self.ready_from.get(&from) {
            let kind = if *prev == msg.root {
                FaultKind::Duplicate
            } else {
                FaultKind::ConflictingRoot
            };
            return RbcStep::fault(from, kind);
        }
        self.ready_from.insert(from, msg.root);
        let root = msg.root;
        let amplify = self.cfg.threshold(Threshold::FPlus1);
        let st = self.roots.entry(root).or_default();
        st.readies.push(depth);
        let mut step = RbcStep::default();
        if st.readies.len() >= amplify && !self.ready_sent {
            let d = join_first(st.readies.iter().copied(), amplify);
            self.ready_sent = true;
            let msg = RbcMessage::ready(root).with_active_set(self.cfg.wire_active_set());
            step.messages.extend(self.to_active(msg, d.next()));
        }
        step.extend(self.try_deliver_avid(root));
        step
    }

    fn try_deliver_avid(&mut self, root: Digest) -> RbcStep {
        let (k, deliver_at) = (self.k(), self.cfg.threshold(Threshold::TwoFPlus1));
        let mut step = RbcStep::default();
        let st = &self.roots[&root];
        if self.delivered.is_some() || st.readies.len() < deliver_at || st.blocks.len() < k {
            return step;
        }
        let d = join_first(st.readies.iter().copied(), deliver_at)
            .join(join_first(st.blocks.iter().map(|c| c.depth), k));
        if !self.check_root(&root) {
            self.aborted = true;
            return step;
        }
        let Some(value) = self.decode_root(&root) else {
            self.aborted = true;
            return step;
        };
        self.delivered = Some(root);
        if self.cfg.variant == RbcKind::AvidL {
            if let Some((proof, block)) = self.own_block(&root) {
                let msg = RbcMessage::with_block(RbcMessageKind::Val, &proof, block);
                step.messages.extend(self.to_learners(msg, d.next()));
            }
        }
        step.output = Some(RbcDelivery {
            value,
            root,
            depth: d,
        });
        step
    }

    /// Learner side: collect `n1 - f` Merkle-valid blocks under one root.
    fn on_learned(&mut self, from: ReplicaId, msg: RbcMessage, depth: Depth) -> RbcStep {
        if self.my_pos.is_some() {
            return RbcStep::fault(from, FaultKind::UnexpectedKind);
        }
        let Some(pos) = self.cfg.position(from) else {
            return RbcStep::fault(from, FaultKind::NotActive);
        };
        if msg.active_set.is_some() {
            return RbcStep::fault(from, FaultKind::BadActiveSet);
        }
        if let Err(kind) = self.check_block(&msg, pos) {
            return RbcStep::fault(from, kind);
        }
        if !self.learned_from.insert(from) {
            return RbcStep::fault(from, FaultKind::Duplicate);
        }
        let (k, total, quorum) = (self.k(), self.n1(), self.quorum());
        let root = msg.root;
        let st = self.roots.entry(root).or_default();
        st.learned.push(Contribution {
            block: CodedBlock {
                index: pos,
                data: msg.block,
            },
            depth,
        });
        let mut step = RbcStep::default();
        if st.learned.len() < quorum || self.delivered.is_some() {
            return step;
        }
        let d = join_first(st.learned.iter().map(|c| c.depth), quorum);
        let consistent = coding::reencode(st.learned.iter().map(|c| &c.block), k, total)
            .ok()
            .and_then(|all| {
                let datas: Vec<&[u8]> = all.iter().map(|b| b.data.as_slice()).collect();
                MerkleTree::new(&datas).ok().map(|t| t.root() == root)
            })
            .unwrap_or(false);
        let value = consistent
            .then(|| coding::decode(st.learned.iter().map(|c| &c.block), k, total).ok())
            .flatten();
        match value {
            Some(value) => {
                self.delivered = Some(root);
                step.output = Some(RbcDelivery {
                    value,
                    root,
                    depth: d,
                });
            }
            None => self.aborted = true,
        }
        step
    }
}
