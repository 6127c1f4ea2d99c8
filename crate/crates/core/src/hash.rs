//! Small, platform-stable 64-bit hashing primitives.
//!
//! Projections and model checksums must be identical across processes,
//! machines and toolchain versions, so nothing here goes through
//! `std::hash`.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `bytes`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_extend(FNV_OFFSET, bytes)
}

/// Continues an FNV-1a state with more bytes.
pub fn fnv1a64_extend(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

/// SplitMix64 finalizer. Bijective, good avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a tagged byte string under `seed`.
pub fn seeded_hash(seed: u64, tag: u8, bytes: &[u8]) -> u64 {
    let state = fnv1a64_extend(FNV_OFFSET ^ mix64(seed), &[tag]);
    mix64(fnv1a64_extend(state, bytes))
}

/// Combines two words into one well-mixed word.
#[inline]
pub fn combine(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b.wrapping_add(0x632b_e59b_d9b4_e019)))
}
