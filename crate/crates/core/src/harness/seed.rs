/// Method slot used for the per-design population stream.
pub const POPULATION_STREAM: u64 = 0;
/// Method slot used when one dataset per replicate is shared by all methods.
pub const SHARED_STREAM: u64 = 0xff;

fn fmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one (design, method slot, replicate) stream.
///
/// The identifiers are packed into disjoint bit fields and passed through
/// a bijective mixer keyed by the base seed, so distinct identifiers within
/// the packing ranges never collide.
pub fn derive_seed(base_seed: u64, design_id: u32, method: u64, replicate: u32) -> u64 {
    debug_assert!(design_id < 1 << 16 && method < 1 << 16);
    let key = (u64::from(design_id) << 48) | ((method & 0xffff) << 32) | u64::from(replicate);
    fmix64(key ^ fmix64(base_seed.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}
