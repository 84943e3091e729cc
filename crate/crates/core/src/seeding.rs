//! Keyed deterministic randomness.
//!
//! Every random draw in the crate comes from a generator derived from a user
//! seed plus a key (record id, variant index, purpose tag). No shared RNG
//! state, so parallel or reordered work produces identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn digest(seed: u64, parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

pub fn keyed_u64(seed: u64, parts: &[&[u8]]) -> u64 {
    let d = digest(seed, parts);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

pub fn keyed_rng(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(seed, parts))
}
