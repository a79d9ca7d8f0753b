//! Trusted-dealer common coin: a keyed hash of the round coordinates.

use sha2::{Digest as _, Sha256};

const DOMAIN: &[u8] = b"mib-coin";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoinSource {
    seed: Vec<u8>,
}

impl CoinSource {
    pub fn new(seed: impl Into<Vec<u8>>) -> Self {
        CoinSource { seed: seed.into() }
    }

    pub fn from_u64(seed: u64) -> Self {
        CoinSource::new(seed.to_be_bytes().to_vec())
    }

    pub fn coin(&self, epoch: u64, instance: u16, round: u16) -> bool {
        let mut h = Sha256::new();
        h.update(DOMAIN);
        h.update((self.seed.len() as u32).to_be_bytes());
        h.update(&self.seed);
        h.update(epoch.to_be_bytes());
        h.update(instance.to_be_bytes());
        h.update(round.to_be_bytes());
        let out: [u8; 32] = h.finalize().into();
        out[31] & 1 == 1
    }
}
