//! Deterministic sub-seed derivation. Any stage, level, or worker rebuilds its
//! RNG stream from (master seed, label, index) alone, so batches of rollouts
//! can run in any order — or in parallel — without changing a single byte of
//! output.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The one RNG used everywhere.
pub type Rng = ChaCha12Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit child seed from (master, label, index). Stable across platforms and
/// releases; not cryptographic.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ fnv1a(label.as_bytes()));
    splitmix64(h ^ index)
}

/// A fresh RNG stream for (master, label, index).
pub fn stream(master: u64, label: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, label, index))
}

/// Standard normal draw via Box-Muller; consumes exactly two uniforms.
pub fn standard_normal(rng: &mut Rng) -> f64 {
    use rand::Rng as _;
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
