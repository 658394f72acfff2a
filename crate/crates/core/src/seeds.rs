//! Per-component seed derivation.
//!
//! Every random stream in a run comes from the single user seed: the seed
//! (8 bytes, little-endian) and a component name are hashed with SHA-256
//! and the first 8 digest bytes, read little-endian, seed a ChaCha8 stream.
//! Components therefore draw independent streams and adding a new
//! component never perturbs an existing one.

use sha2::{Digest, Sha256};

pub fn derive(seed: u64, component: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(component.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// `derive(seed, "{component}/{index}")`.
pub fn derive_indexed(seed: u64, component: &str, index: usize) -> u64 {
    derive(seed, &format!("{component}/{index}"))
}
