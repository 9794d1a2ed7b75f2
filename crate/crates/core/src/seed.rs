//! Seed derivation. Every random stream in the crate is keyed by a base seed
//! plus a label so that independent consumers never share draws.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Derives a 64-bit seed from a base seed and a list of string parts.
pub fn derive(base: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output has 32 bytes"))
}

pub fn rng(base: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive(base, &[label]))
}

/// A stream indexed by a counter, e.g. one per optimizer step.
pub fn stream(base: u64, label: &str, counter: u64) -> ChaCha20Rng {
    let mut r = rng(base, label);
    r.set_stream(counter);
    r
}

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}
