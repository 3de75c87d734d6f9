//! Deterministic sub-seed derivation.
//!
//! Replicates, folds, and synthetic sessions each get their own RNG stream so
//! results do not depend on execution order. Streams are derived by folding
//! the parent seed and the part indices through splitmix64.

/// One splitmix64 step.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of part indices.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(seed);
    for &p in parts {
        s = splitmix64(s ^ p.wrapping_mul(0xA24B_AED4_963E_E407));
    }
    s
}

/// FNV-1a hash of a string, for folding ids into seed paths.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
