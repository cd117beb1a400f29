//! Deterministic random streams.
//!
//! Every random draw in the pipeline comes from a stream keyed by the master
//! seed plus a path of labels (stage name, record id, ...). Streams never
//! depend on processing order, so sharded and resumed runs draw the same
//! values as a straight run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StageRng = ChaCha8Rng;

/// Derives a child seed from `master` and a label path.
pub fn derive_seed(master: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(master: u64, labels: &[&str]) -> StageRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, labels))
}

pub fn seeded(seed: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(seed)
}
