//! Named, independent seed streams derived from one master seed.

use sha2::{Digest, Sha256};

/// Seed for stream `tag` / `index` under `master`. Distinct tags or indices
/// give unrelated seeds.
pub fn derive(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 is 32 bytes"))
}
