//! Deterministic seeded randomness.
//!
//! Every random draw in the library flows from one `u64` seed through named
//! sub-streams (`init`, `shuffle`, `sim-params`, ...), so individual
//! components stay reproducible when unrelated code changes. ChaCha8 is the
//! underlying generator; the mapping from raw 64-bit words to floats,
//! ranges, and normal deviates lives here so that results are bit-stable
//! regardless of dependency internals.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator handed out for every named stream.
pub type StreamRng = ChaCha8Rng;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for a named stream of `seed`.
pub fn stream_seed(seed: u64, stream: &str) -> u64 {
    let mut h = splitmix64(seed);
    for &b in stream.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

/// RNG for a named sub-stream of `seed`.
pub fn stream_rng(seed: u64, stream: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, stream))
}

/// Sub-seed for the `index`-th element of a named stream (epochs, folds,
/// subjects), independent of how many elements came before it.
pub fn indexed_stream_seed(seed: u64, stream: &str, index: u64) -> u64 {
    splitmix64(stream_seed(seed, stream) ^ index)
}

/// RNG for the `index`-th element of a named sub-stream.
pub fn indexed_stream_rng(seed: u64, stream: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(indexed_stream_seed(seed, stream, index))
}

/// Uniform draw in [0, 1) with 53-bit resolution.
pub fn uniform(rng: &mut StreamRng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in [lo, hi).
pub fn uniform_in(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Uniform integer in [0, n); n must be positive.
pub fn uniform_below(rng: &mut StreamRng, n: usize) -> usize {
    debug_assert!(n > 0);
    ((u128::from(rng.next_u64()) * n as u128) >> 64) as usize
}

/// Standard normal deviate (Box-Muller, two uniforms per call).
pub fn normal(rng: &mut StreamRng) -> f64 {
    let u1 = uniform(rng).max(f64::MIN_POSITIVE);
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Bernoulli draw with success probability `p`.
pub fn bernoulli(rng: &mut StreamRng, p: f64) -> bool {
    uniform(rng) < p
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut StreamRng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_below(rng, i + 1);
        items.swap(i, j);
    }
}
