//! Malicious sender inputs used by fault injection and tests.

use super::{RbcConfig, RbcError, RbcMessage, RbcMessageKind};
use crate::coding::{self, merkle_build, CodedBlock};
use crate::types::{Depth, Outgoing, RbcKind};

fn first_kind(variant: RbcKind) -> RbcMessageKind {
    match variant {
        RbcKind::Mbc | RbcKind::MbcL => RbcMessageKind::Init,
        RbcKind::Avid | RbcKind::AvidL => RbcMessageKind::Send,
    }
}

fn disperse(
    cfg: &RbcConfig,
    blocks: &[CodedBlock],
    positions: impl Iterator<Item = usize>,
    base: Depth,
) -> Result<Vec<Outgoing<RbcMessage>>, RbcError> {
    let datas: Vec<&[u8]> = blocks.iter().map(|b| b.data.as_slice()).collect();
    let (_, proofs) = merkle_build(&datas)?;
    let kind = first_kind(cfg.variant);
    Ok(positions
        .map(|p| Outgoing {
            to: cfg.active_set[p],
            message: RbcMessage::with_block(kind, &proofs[p], blocks[p].data.clone())
                .with_active_set(cfg.wire_active_set()),
            depth: base.next(),
        })
        .collect())
}

/// Split-root attack: the first half of the active set receives blocks of
/// `a`, the second half blocks of `b`, each under its own valid tree.
pub fn forge_split_input(
    cfg: &RbcConfig,
    a: &[u8],
    b: &[u8],
    base: Depth,
) -> Result<Vec<Outgoing<RbcMessage>>, RbcError> {
    let n1 = cfg.n1();
    let half = n1 / 2;
    let blocks_a = coding::encode(a, cfg.k_data, cfg.k_total)?;
    let blocks_b = coding::encode(b, cfg.k_data, cfg.k_total)?;
    let mut out = disperse(cfg, &blocks_a, 0..half, base)?;
    out.extend(disperse(cfg, &blocks_b, half..n1, base)?);
    Ok(out)
}

/// Commits to blocks that are not a codeword: every proof verifies, but
/// re-encoding any `k_data` of them yields a different root. With
/// `k_data == k_total` every word is a codeword and the forgery is honest.
pub fn forge_inconsistent_input(
    cfg: &RbcConfig,
    value: &[u8],
    base: Depth,
) -> Result<Vec<Outgoing<RbcMessage>>, RbcError> {
    let mut blocks = coding::encode(value, cfg.k_data, cfg.k_total)?;
    // A weight-one error is below the code distance, so the word is no
    // longer a codeword and every k-subset re-encodes to a different tree.
    if cfg.k_total > cfg.k_data {
        let last = blocks.last_mut().expect("k_total >= 1");
        last.data[0] ^= 0x5a;
    }
    disperse(cfg, &blocks, 0..cfg.n1(), base)
}
