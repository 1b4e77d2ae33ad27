//! Subsystem seed derivation: the first eight bytes (little-endian) of
//! SHA-256 over the top-level seed's little-endian bytes followed by the
//! subsystem name.

use sha2::{Digest, Sha256};

pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
