//! Deterministic seed derivation.
//!
//! Every randomized stage derives the seed of each independent sub-task from
//! a master seed and the sub-task's indices with [`derive`]. Results are
//! therefore reproducible regardless of worker count or scheduling order.

/// SplitMix64 step; the standard finalizer with good avalanche behaviour.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a sequence of tag integers
/// (replica index, year index, ensemble side, ...).
pub fn derive(master: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &t in tags {
        s = splitmix64(s ^ splitmix64(t));
    }
    s
}
