//! Stable hashing used for feature buckets and keyed random streams.
//!
//! Everything here must produce the same values across platforms, runs and
//! compiler versions, so `std::hash` is not used.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over a byte string.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_extend(FNV_OFFSET, bytes)
}

pub fn fnv1a_extend(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a seed, a string key and a counter into one 64-bit key.
pub fn keyed(seed: u64, key: &str, counter: u64) -> u64 {
    let h = fnv1a_extend(mix64(seed), key.as_bytes());
    mix64(h ^ mix64(counter.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Uniform draw in [0, 1) from a 64-bit key (53 bits of mantissa).
pub fn unit_f64(key: u64) -> f64 {
    (mix64(key) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
