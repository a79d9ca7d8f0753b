//! Proposal selection and the proposal byte format:
//! `count (u32 BE) | per tx: id (u64 BE) | len (u32 BE) | payload`.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::types::Transaction;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProposalError {
    #[error("proposal truncated")]
    Truncated,
    #[error("{0} trailing bytes after proposal")]
    Trailing(usize),
}

/// Per-replica proposal size `b = ceil(B / n)`.
pub fn proposal_size(batch: usize, n: usize) -> usize {
    batch.div_ceil(n)
}

/// Draws `ceil(B / n)` transactions uniformly from the first `B` buffer
/// entries, returned in buffer order. A buffer window smaller than that is
/// proposed whole.
pub fn select_proposal<R: Rng + ?Sized>(
    buf: &[Transaction],
    batch: usize,
    n: usize,
    rng: &mut R,
) -> Vec<Transaction> {
    let window = &buf[..batch.min(buf.len())];
    let b = proposal_size(batch, n);
    if window.len() <= b {
        return window.to_vec();
    }
    let mut picks = index::sample(rng, window.len(), b).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|i| window[i].clone()).collect()
}

pub fn encode_proposal(txs: &[Transaction]) -> Vec<u8> {
    let len = 4 + txs.iter().map(|t| 12 + t.payload.len()).sum::<usize>();
    let mut out = Vec::with_capacity(len);
    out.extend_from_slice(&(txs.len() as u32).to_be_bytes());
    for t in txs {
        out.extend_from_slice(&t.id.to_be_bytes());
        out.extend_from_slice(&(t.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&t.payload);
    }
    out
}

pub fn decode_proposal(bytes: &[u8]) -> Result<Vec<Transaction>, ProposalError> {
    fn take<'a>(bytes: &mut &'a [u8], len: usize) -> Result<&'a [u8], ProposalError> {
        if bytes.len() < len {
            return Err(ProposalError::Truncated);
        }
        let (head, tail) = bytes.split_at(len);
        *bytes = tail;
        Ok(head)
    }
    let mut rest = bytes;
    let count = u32::from_be_bytes(take(&mut rest, 4)?.try_into().expect("4 bytes"));
    // Each transaction takes at least 12 bytes, which bounds the allocation.
    let mut txs = Vec::with_capacity((count as usize).min(rest.len() / 12));
    for _ in 0..count {
        let id = u64::from_be_bytes(take(&mut rest, 8)?.try_into().expect("8 bytes"));
        let len = u32::from_be_bytes(take(&mut rest, 4)?.try_into().expect("4 bytes")) as usize;
        let payload = take(&mut rest, len)?.to_vec();
        txs.push(Transaction { id, payload });
    }
    if !rest.is_empty() {
        return Err(ProposalError::Trailing(rest.len()));
    }
    Ok(txs)
}
