//! Small deterministic hashing helpers shared by seeded choices.

/// One step of the SplitMix64 generator; a good 64-bit mixer on its own.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over bytes; stable across platforms and releases, unlike the
/// standard library hasher.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Deterministic pick in `0..n` keyed by a seed and a label.
pub fn seeded_index(seed: u64, key: &str, n: usize) -> usize {
    assert!(n > 0, "cannot pick from an empty set");
    (splitmix64(seed ^ fnv1a(key.as_bytes())) % n as u64) as usize
}
