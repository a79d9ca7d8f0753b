//! MDS erasure coding and Merkle commitments shared by every RBC variant.

mod erasure;
mod gf256;
mod merkle;

pub(crate) use erasure::reencode;
pub use erasure::{decode, encode, CodedBlock};
pub use merkle::{leaf_digest, merkle_build, merkle_verify, Digest, MerkleProof, MerkleTree};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodingError {
    #[error("invalid coding parameters k_data={k_data}, k_total={k_total}")]
    Parameters { k_data: usize, k_total: usize },
    #[error("cannot encode an empty message")]
    EmptyMessage,
    #[error("need {needed} distinct blocks, got {got}")]
    InsufficientBlocks { needed: usize, got: usize },
    #[error("malformed input: {0}")]
    Malformed(&'static str),
    #[error("a Merkle tree needs at least one leaf")]
    NoLeaves,
}
