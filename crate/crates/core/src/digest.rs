//! Content hashing shared by assets, caches, and the workspace manifest.

use sha2::{Digest, Sha256};

/// 64-bit digest over the concatenation of `parts`, each length-prefixed so
/// that `["ab", "c"]` and `["a", "bc"]` differ.
pub fn hash64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let out = h.finalize();
    u64::from_be_bytes(out[..8].try_into().unwrap())
}

pub fn hash64_str(parts: &[&str]) -> u64 {
    let bytes: Vec<&[u8]> = parts.iter().map(|s| s.as_bytes()).collect();
    hash64(&bytes)
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    out.iter().map(|b| format!("{b:02x}")).collect()
}
