//! Byte layout of broadcast messages:
//!
//! ```text
//! tag (1) | root (32) | leaf index (2, BE) | branch count (1) | branch (32 each)
//!         | block length (4, BE) | block | [active count (1) | indices (2 BE each)]
//! ```
//!
//! The trailing active set is present iff bytes remain after the block.

use thiserror::Error;

use crate::coding::{Digest, MerkleProof};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RbcMessageKind {
    Init = 0,
    Witness = 1,
    Send = 2,
    Echo = 3,
    Ready = 4,
    Val = 5,
}

impl RbcMessageKind {
    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => RbcMessageKind::Init,
            1 => RbcMessageKind::Witness,
            2 => RbcMessageKind::Send,
            3 => RbcMessageKind::Echo,
            4 => RbcMessageKind::Ready,
            5 => RbcMessageKind::Val,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated message")]
    Truncated,
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("trailing bytes after message")]
    Trailing,
}

/// One broadcast message. Messages without a block (AVID `ready`) carry
/// leaf index 0, no branch and an empty block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbcMessage {
    pub kind: RbcMessageKind,
    pub root: Digest,
    pub leaf_index: u16,
    pub branch: Vec<Digest>,
    pub block: Vec<u8>,
    pub active_set: Option<Vec<u16>>,
}

impl RbcMessage {
    pub fn with_block(kind: RbcMessageKind, proof: &MerkleProof, block: Vec<u8>) -> Self {
        RbcMessage {
            kind,
            root: proof.root,
            leaf_index: proof.leaf_index as u16,
            branch: proof.branch.clone(),
            block,
            active_set: None,
        }
    }

    pub fn ready(root: Digest) -> Self {
        RbcMessage {
            kind: RbcMessageKind::Ready,
            root,
            leaf_index: 0,
            branch: Vec::new(),
            block: Vec::new(),
            active_set: None,
        }
    }

    pub fn with_active_set(mut self, set: Option<Vec<u16>>) -> Self {
        self.active_set = set;
        self
    }

    pub fn proof(&self) -> MerkleProof {
        MerkleProof {
            root: self.root,
            branch: self.branch.clone(),
            leaf_index: self.leaf_index as usize,
        }
    }

    pub fn encoded_len(&self) -> usize {
        1 + 32
            + 2
            + 1
            + 32 * self.branch.len()
            + 4
            + self.block.len()
            + self.active_set.as_ref().map_or(0, |s| 1 + 2 * s.len())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.root);
        out.extend_from_slice(&self.leaf_index.to_be_bytes());
        out.push(u8::try_from(self.branch.len()).expect("branch fits in one byte"));
        for d in &self.branch {
            out.extend_from_slice(d);
        }
        out.extend_from_slice(&(self.block.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.block);
        if let Some(set) = &self.active_set {
            out.push(u8::try_from(set.len()).expect("active set fits in one byte"));
            for i in set {
                out.extend_from_slice(&i.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader(bytes);
        let tag = r.u8()?;
        let kind = RbcMessageKind::from_tag(tag).ok_or(WireError::UnknownTag(tag))?;
        let root = r.digest()?;
        let leaf_index = u16::from_be_bytes(r.take(2)?.try_into().expect("2 bytes"));
        let branch_len = r.u8()? as usize;
        let branch = (0..branch_len)
            .map(|_| r.digest())
            .collect::<Result<Vec<_>, _>>()?;
        let block_len = u32::from_be_bytes(r.take(4)?.try_into().expect("4 bytes")) as usize;
        let block = r.take(block_len)?.to_vec();
        let active_set = if r.0.is_empty() {
            None
        } else {
            let count = r.u8()? as usize;
            let set = (0..count)
                .map(|_| r.take(2).map(|b| u16::from_be_bytes([b[0], b[1]])))
                .collect::<Result<Vec<_>, _>>()?;
            if !r.0.is_empty() {
                return Err(WireError::Trailing);
            }
            Some(set)
        };
        Ok(RbcMessage {
            kind,
            root,
            leaf_index,
            branch,
            block,
            active_set,
        })
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], WireError> {
        if self.0.len() < len {
            return Err(WireError::Truncated);
        }
        let (head, tail) = self.0.split_at(len);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn digest(&mut self) -> Result<Digest, WireError> {
        Ok(self.take(32)?.try_into().expect("32 bytes"))
    }
}
