//! Seeded randomness for the whole pipeline.
//!
//! Every random draw flows from one root seed. The generator is ChaCha8
//! (`rand_chacha`), seeded explicitly everywhere; Gaussian draws use the
//! Box-Muller transform on 53-bit uniforms, so the sampled values are fully
//! determined by the ChaCha byte stream and reproduce bit-for-bit across runs.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// The crate-wide pseudorandom generator.
pub type Rng = ChaCha8Rng;

/// Create a generator from an explicit 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a subsystem seed from a root seed and a stream label.
///
/// FNV-1a hashes the label, SplitMix64 finalizes the mix with the root.
/// Distinct labels give statistically independent streams while one root
/// seed still pins the entire pipeline.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &byte in label.as_bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    split_mix64(root ^ h)
}

fn split_mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn uniform_f64(rng: &mut Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    (rng.next_u64() >> 11) as f64 * SCALE
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform_in(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform_f64(rng)
}

/// Uniform integer in `[0, n)` by rejection-free scaling; n must be > 0.
pub fn uniform_usize(rng: &mut Rng, n: usize) -> usize {
    debug_assert!(n > 0);
    // 53-bit uniform scaled to n; bias is negligible for the small n used here.
    (uniform_f64(rng) * n as f64) as usize % n
}

/// Standard normal draw via Box-Muller. Consumes two uniforms per value.
pub fn gaussian_f64(rng: &mut Rng) -> f64 {
    // u1 in (0, 1] keeps ln finite; u2 in [0, 1).
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
    let u2 = uniform_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fisher-Yates shuffle driven by the crate generator.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_usize(rng, i + 1);
        items.swap(i, j);
    }
}
