//! Binary Merkle tree over SHA-256 with leaf/node domain separation.
//!
//! Leaf counts that are not a power of two are padded by repeating the last
//! leaf digest.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::CodingError;

pub type Digest = [u8; 32];

const LEAF_TAG: u8 = 0x00;
const NODE_TAG: u8 = 0x01;

pub fn leaf_digest(leaf: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update([LEAF_TAG]);
    h.update(leaf);
    h.finalize().into()
}

fn node_digest(left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([NODE_TAG]);
    h.update(left);
    h.update(right);
    h.finalize().into()
}

/// Inclusion proof for one leaf.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MerkleProof {
    pub root: Digest,
    /// Sibling digests from the leaf level upwards.
    pub branch: Vec<Digest>,
    pub leaf_index: usize,
}

#[derive(Debug, Clone)]
pub struct MerkleTree {
    /// `levels[0]` holds the padded leaf digests, the last level the root.
    levels: Vec<Vec<Digest>>,
    leaf_count: usize,
}

impl MerkleTree {
    pub fn new<L: AsRef<[u8]>>(leaves: &[L]) -> Result<Self, CodingError> {
        if leaves.is_empty() {
            return Err(CodingError::NoLeaves);
        }
        let mut level: Vec<Digest> = leaves.iter().map(|l| leaf_digest(l.as_ref())).collect();
        let padded = level.len().next_power_of_two();
        let last = *level.last().expect("non-empty");
        level.resize(padded, last);
        let mut levels = vec![level];
        while levels.last().expect("non-empty").len() > 1 {
            let next = levels
                .last()
                .expect("non-empty")
                .chunks(2)
                .map(|pair| node_digest(&pair[0], &pair[1]))
                .collect();
            levels.push(next);
        }
        Ok(MerkleTree {
            levels,
            leaf_count: leaves.len(),
        })
    }

    pub fn root(&self) -> Digest {
        self.levels.last().expect("non-empty")[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn proof(&self, leaf_index: usize) -> MerkleProof {
        assert!(leaf_index < self.leaf_count, "leaf index out of range");
        let mut idx = leaf_index;
        let branch = self.levels[..self.levels.len() - 1]
            .iter()
            .map(|level| {
                let sibling = level[idx ^ 1];
                idx >>= 1;
                sibling
            })
            .collect();
        MerkleProof {
            root: self.root(),
            branch,
            leaf_index,
        }
    }
}

/// Builds the tree and returns its root and one proof per leaf.
pub fn merkle_build<L: AsRef<[u8]>>(
    leaves: &[L],
) -> Result<(Digest, Vec<MerkleProof>), CodingError> {
    let tree = MerkleTree::new(leaves)?;
    let proofs = (0..tree.leaf_count()).map(|i| tree.proof(i)).collect();
    Ok((tree.root(), proofs))
}

/// True iff `leaf` at `proof.leaf_index` hashes up through `proof.branch`
/// to `root`.
pub fn merkle_verify(root: &Digest, proof: &MerkleProof, leaf: &[u8]) -> bool {
    if proof.root != *root || proof.branch.len() >= usize::BITS as usize {
        return false;
    }
    if proof.leaf_index >> proof.branch.len() != 0 {
        return false;
    }
    let mut acc = leaf_digest(leaf);
    let mut idx = proof.leaf_index;
    for sibling in &proof.branch {
        acc = if idx & 1 == 0 {
            node_digest(&acc, sibling)
        } else {
            node_digest(sibling, &acc)
        };
        idx >>= 1;
    }
    acc == *root
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_leaf() {
        let (root, proofs) = merkle_build(&[b"only"]).unwrap();
        assert_eq!(root, leaf_digest(b"only"));
        assert!(proofs[0].branch.is_empty());
        assert!(merkle_verify(&root, &proofs[0], b"only"));
    }

    #[test]
    fn four_leaves_branch_length_two() {
        let leaves = [b"a", b"b", b"c", b"d"];
        let (root, proofs) = merkle_build(&leaves).unwrap();
        for (i, p) in proofs.iter().enumerate() {
            assert_eq!(p.branch.len(), 2);
            assert!(merkle_verify(&root, p, leaves[i]));
        }
    }

    #[test]
    fn padding_and_branch_length() {
        for count in 1..=17usize {
            let leaves: Vec<Vec<u8>> = (0..count).map(|i| vec![i as u8; 3]).collect();
            let (root, proofs) = merkle_build(&leaves).unwrap();
            let depth = count.next_power_of_two().trailing_zeros() as usize;
            for (i, p) in proofs.iter().enumerate() {
                assert_eq!(p.branch.len(), depth);
                assert!(merkle_verify(&root, p, &leaves[i]));
            }
        }
    }

    #[test]
    fn mutations_rejected() {
        let leaves: Vec<Vec<u8>> = (0..6u8).map(|i| vec![i; 8]).collect();
        let (root, proofs) = merkle_build(&leaves).unwrap();
        let p = &proofs[2];
        assert!(!merkle_verify(&root, p, &leaves[3]));
        let mut swapped = p.clone();
        swapped.branch.swap(0, 1);
        assert!(!merkle_verify(&root, &swapped, &leaves[2]));
        let mut moved = p.clone();
        moved.leaf_index = 3;
        assert!(!merkle_verify(&root, &moved, &leaves[2]));
        let mut far = p.clone();
        far.leaf_index = 2 + (1 << p.branch.len());
        assert!(!merkle_verify(&root, &far, &leaves[2]));
        let mut other_root = root;
        other_root[0] ^= 1;
        assert!(!merkle_verify(&other_root, p, &leaves[2]));
    }

    #[test]
    fn empty_rejected() {
        let empty: [&[u8]; 0] = [];
        assert_eq!(merkle_build(&empty).unwrap_err(), CodingError::NoLeaves);
    }
}
