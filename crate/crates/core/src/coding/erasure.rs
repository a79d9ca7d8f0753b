//! Systematic Reed-Solomon code over GF(256).
//!
//! The generator is `[I; C]` where `C` is a Cauchy matrix, so every
//! `k_data x k_data` submatrix is invertible and any `k_data` blocks decode.

use serde::{Deserialize, Serialize};

use super::gf256;
use super::CodingError;

const LEN_PREFIX: usize = 4;
const MAX_BLOCKS: usize = 256;

/// The `index`-th block of one encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodedBlock {
    pub index: usize,
    pub data: Vec<u8>,
}

fn check_params(k_data: usize, k_total: usize) -> Result<(), CodingError> {
    if k_data == 0 || k_total < k_data || k_total > MAX_BLOCKS {
        return Err(CodingError::Parameters { k_data, k_total });
    }
    Ok(())
}

/// Row `row` of the generator matrix (length `k_data`).
fn generator_row(row: usize, k_data: usize) -> Vec<u8> {
    if row < k_data {
        return (0..k_data).map(|j| u8::from(j == row)).collect();
    }
    // x_row = row, y_j = j; disjoint because row >= k_data > j.
    (0..k_data)
        .map(|j| gf256::inv((row as u8) ^ (j as u8)))
        .collect()
}

/// Encodes `message` into `k_total` blocks, any `k_data` of which decode.
///
/// The message is framed with a 4-byte big-endian length and zero-padded to
/// a multiple of `k_data`; the first `k_data` blocks are the framed bytes.
pub fn encode(
    message: &[u8],
    k_data: usize,
    k_total: usize,
) -> Result<Vec<CodedBlock>, CodingError> {
    check_params(k_data, k_total)?;
    if message.is_empty() {
        return Err(CodingError::EmptyMessage);
    }
    let len =
        u32::try_from(message.len()).map_err(|_| CodingError::Malformed("message too long"))?;
    let framed_len = LEN_PREFIX + message.len();
    let block_len = framed_len.div_ceil(k_data);
    let mut framed = Vec::with_capacity(block_len * k_data);
    framed.extend_from_slice(&len.to_be_bytes());
    framed.extend_from_slice(message);
    framed.resize(block_len * k_data, 0);

    let mut blocks: Vec<CodedBlock> = framed
        .chunks(block_len)
        .enumerate()
        .map(|(index, chunk)| CodedBlock {
            index,
            data: chunk.to_vec(),
        })
        .collect();
    for row in k_data..k_total {
        let coeffs = generator_row(row, k_data);
        let mut data = vec![0u8; block_len];
        for (j, &c) in coeffs.iter().enumerate() {
            gf256::mul_add(&mut data, &blocks[j].data, c);
        }
        blocks.push(CodedBlock { index: row, data });
    }
    Ok(blocks)
}

/// Recovers the data blocks (the zero-padded framed message) from any
/// `k_data` distinct blocks.
fn recover_data<'a, I>(
    blocks: I,
    k_data: usize,
    k_total: usize,
) -> Result<Vec<Vec<u8>>, CodingError>
where
    I: IntoIterator<Item = &'a CodedBlock>,
{
    check_params(k_data, k_total)?;
    let mut chosen: Vec<&CodedBlock> = Vec::with_capacity(k_data);
    let mut seen = [false; MAX_BLOCKS];
    let mut block_len = None;
    for b in blocks {
        if b.index >= k_total {
            return Err(CodingError::Malformed("block index out of range"));
        }
        match block_len {
            None => block_len = Some(b.data.len()),
            Some(l) if l != b.data.len() => {
                return Err(CodingError::Malformed("inconsistent block lengths"))
            }
            _ => {}
        }
        if !seen[b.index] && chosen.len() < k_data {
            seen[b.index] = true;
            chosen.push(b);
        }
    }
    if chosen.len() < k_data {
        return Err(CodingError::InsufficientBlocks {
            needed: k_data,
            got: chosen.len(),
        });
    }
    let block_len = block_len.unwrap_or(0);
    if block_len == 0 {
        return Err(CodingError::Malformed("empty blocks"));
    }

    // Fast path: all systematic blocks present.
    if chosen.iter().all(|b| b.index < k_data) {
        let mut data = vec![Vec::new(); k_data];
        for b in chosen {
            data[b.index] = b.data.clone();
        }
        return Ok(data);
    }

    let matrix: Vec<Vec<u8>> = chosen
        .iter()
        .map(|b| generator_row(b.index, k_data))
        .collect();
    let inverse =
        gf256::invert(matrix).ok_or(CodingError::Malformed("singular decoding matrix"))?;
    let data = inverse
        .iter()
        .map(|coeffs| {
            let mut out = vec![0u8; block_len];
            for (c, b) in coeffs.iter().zip(&chosen) {
                gf256::mul_add(&mut out, &b.data, *c);
            }
            out
        })
        .collect();
    Ok(data)
}

/// Decodes the original message from at least `k_data` distinct blocks.
pub fn decode<'a, I>(blocks: I, k_data: usize, k_total: usize) -> Result<Vec<u8>, CodingError>
where
    I: IntoIterator<Item = &'a CodedBlock>,
{
    let data = recover_data(blocks, k_data, k_total)?;
    let framed: Vec<u8> = data.concat();
    if framed.len() < LEN_PREFIX {
        return Err(CodingError::Malformed("missing length prefix"));
    }
    let len = u32::from_be_bytes(framed[..LEN_PREFIX].try_into().expect("4 bytes")) as usize;
    let body = &framed[LEN_PREFIX..];
    if len == 0 || len > body.len() {
        return Err(CodingError::Malformed("length prefix out of range"));
    }
    Ok(body[..len].to_vec())
}

/// Re-derives all `k_total` blocks from any `k_data` of them without
/// unframing. Used by the root-consistency check.
pub(crate) fn reencode<'a, I>(
    blocks: I,
    k_data: usize,
    k_total: usize,
) -> Result<Vec<CodedBlock>, CodingError>
where
    I: IntoIterator<Item = &'a CodedBlock>,
{
    let data = recover_data(blocks, k_data, k_total)?;
    let block_len = data[0].len();
    let mut out: Vec<CodedBlock> = data
        .into_iter()
        .enumerate()
        .map(|(index, data)| CodedBlock { index, data })
        .collect();
    for row in k_data..k_total {
        let coeffs = generator_row(row, k_data);
        let mut data = vec![0u8; block_len];
        for (j, &c) in coeffs.iter().enumerate() {
            gf256::mul_add(&mut data, &out[j].data, c);
        }
        out.push(CodedBlock { index: row, data });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subsets(total: usize, k: usize) -> Vec<Vec<usize>> {
        (0u32..(1 << total))
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..total).filter(|i| m & (1 << i) != 0).collect())
            .collect()
    }

    #[test]
    fn identity_case() {
        let blocks = encode(b"hello", 1, 1).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(decode(&blocks, 1, 1).unwrap(), b"hello");
    }

    #[test]
    fn no_redundancy_any_order() {
        let m = b"the quick brown fox jumps over the lazy dog".to_vec();
        let mut blocks = encode(&m, 5, 5).unwrap();
        blocks.reverse();
        assert_eq!(decode(&blocks, 5, 5).unwrap(), m);
    }

    #[test]
    fn four_of_eight_odd_indices() {
        let m: Vec<u8> = (0..1000u32).map(|i| (i * 31 % 251) as u8).collect();
        let blocks = encode(&m, 4, 8).unwrap();
        let pick: Vec<CodedBlock> = [1, 3, 5, 7].iter().map(|&i| blocks[i].clone()).collect();
        assert_eq!(decode(&pick, 4, 8).unwrap(), m);
    }

    #[test]
    fn systematic_prefix() {
        let m = b"systematic".to_vec();
        let blocks = encode(&m, 3, 6).unwrap();
        let framed: Vec<u8> = blocks[..3].iter().flat_map(|b| b.data.clone()).collect();
        assert_eq!(&framed[..4], &(m.len() as u32).to_be_bytes());
        assert_eq!(&framed[4..4 + m.len()], &m[..]);
        assert!(blocks.iter().all(|b| b.data.len() == blocks[0].data.len()));
    }

    #[test]
    fn all_subsets_up_to_eight() {
        let m: Vec<u8> = (0..97u8).collect();
        for total in 1..=8 {
            for k in 1..=total {
                let blocks = encode(&m, k, total).unwrap();
                for s in subsets(total, k) {
                    let pick: Vec<&CodedBlock> = s.iter().map(|&i| &blocks[i]).collect();
                    assert_eq!(
                        decode(pick, k, total).unwrap(),
                        m,
                        "k={k} total={total} {s:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn errors() {
        assert_eq!(
            encode(b"x", 0, 3),
            Err(CodingError::Parameters {
                k_data: 0,
                k_total: 3
            })
        );
        assert_eq!(
            encode(b"x", 4, 3),
            Err(CodingError::Parameters {
                k_data: 4,
                k_total: 3
            })
        );
        assert_eq!(encode(b"", 1, 3), Err(CodingError::EmptyMessage));

        let blocks = encode(b"some message", 3, 5).unwrap();
        assert_eq!(
            decode(&blocks[..2], 3, 5),
            Err(CodingError::InsufficientBlocks { needed: 3, got: 2 })
        );
        // Duplicates do not count twice.
        let dup = vec![blocks[0].clone(), blocks[0].clone(), blocks[1].clone()];
        assert!(matches!(
            decode(&dup, 3, 5),
            Err(CodingError::InsufficientBlocks { .. })
        ));
        let mut bad = blocks.clone();
        bad[1].data.push(0);
        assert!(matches!(decode(&bad, 3, 5), Err(CodingError::Malformed(_))));
    }

    #[test]
    fn reencode_matches_encode() {
        let m = b"re-encoding must reproduce every block".to_vec();
        let blocks = encode(&m, 3, 7).unwrap();
        let again = reencode([&blocks[6], &blocks[2], &blocks[4]], 3, 7).unwrap();
        assert_eq!(again, blocks);
    }
}
