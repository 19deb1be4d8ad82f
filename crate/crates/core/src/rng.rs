//! Deterministic RNG stream derivation.
//!
//! Every randomized stage derives its own ChaCha stream from a base seed,
//! a label, and an index path. Streams are independent, so per-trajectory
//! or per-cell work can run in parallel and still agree bit-for-bit with a
//! serial run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Mix a label and index path into a base seed.
pub fn derive_seed(seed: u64, label: &str, path: &[u64]) -> u64 {
    let mut s = splitmix64(seed ^ fnv1a(label));
    for &salt in path {
        s = splitmix64(s ^ splitmix64(salt));
    }
    s
}

/// Independent RNG stream for `(seed, label, path)`.
pub fn stream(seed: u64, label: &str, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label, path))
}
