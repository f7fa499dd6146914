//! Named random streams derived from one top-level seed.

use sha2::{Digest, Sha256};

/// Seed of the stream named `purpose` under `seed`: the first eight bytes
/// of `SHA-256(seed_le ‖ purpose)`.
pub fn stream_seed(seed: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
