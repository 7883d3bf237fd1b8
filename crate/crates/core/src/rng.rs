//! Seeded, splittable random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by a
//! 64-bit seed and selected by a 64-bit stream index, so a dataset or training
//! run is reproducible from `(seed, index)` pairs alone. The algorithm name is
//! written into manifests as [`RNG_ALGORITHM`].

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

pub const RNG_ALGORITHM: &str = "chacha8";

/// Opens stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Largest seed that config and manifest files can hold (TOML integers are
/// signed 64-bit).
pub const MAX_SEED: u64 = i64::MAX as u64;

/// Derives a child seed; used to give sub-tasks (sequence `i`, step `s`, ...)
/// their own key without sharing a stream. At most [`MAX_SEED`].
pub fn child_seed(seed: u64, index: u64) -> u64 {
    stream(seed, index ^ 0x9E37_79B9_7F4A_7C15).next_u64() >> 1
}

/// Uniform draw in `[0, 1)` with 53 random mantissa bits.
#[inline]
pub fn uniform(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n` (Lemire's widening-multiply method, unbiased).
pub fn below(rng: &mut impl RngCore, n: u64) -> u64 {
    assert!(n > 0, "below(0)");
    let threshold = n.wrapping_neg() % n;
    loop {
        let m = (rng.next_u64() as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Fair coin.
#[inline]
pub fn coin(rng: &mut impl RngCore) -> bool {
    rng.next_u64() >> 63 == 1
}
