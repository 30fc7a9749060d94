//! Content hashing for cache keys and output provenance stamps.

/// 64-bit FNV-1a over raw bytes, rendered as fixed-width hex.
pub fn content_hash_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
