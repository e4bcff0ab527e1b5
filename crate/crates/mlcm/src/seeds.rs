//! Child seeds derived from a master seed, so every replication draws from
//! its own stream no matter which worker runs it or in what order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// First 8 bytes (little-endian) of SHA-256 over the master seed, experiment
/// id, swept parameter value, replication index and a purpose tag.
pub fn child_seed(master: u64, experiment: &str, param_value: f64, replication: u32, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    // length prefixes keep ("ab", "c") and ("a", "bc") apart
    h.update((experiment.len() as u64).to_le_bytes());
    h.update(experiment.as_bytes());
    h.update(param_value.to_bits().to_le_bytes());
    h.update(replication.to_le_bytes());
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
