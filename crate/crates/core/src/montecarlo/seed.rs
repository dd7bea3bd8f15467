//! Hierarchical, counter-based random streams.
//!
//! A stream is a ChaCha20 generator keyed by SHA-256 of the master seed and a
//! path of indices, so any two distinct paths give unrelated keys and the
//! same path always reproduces the same sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"cellfree-thp/stream/v1";

pub fn seed_stream(master_seed: u64, path: &[u64]) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN);
    hasher.update(master_seed.to_le_bytes());
    hasher.update((path.len() as u64).to_le_bytes());
    for p in path {
        hasher.update(p.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(key)
}
