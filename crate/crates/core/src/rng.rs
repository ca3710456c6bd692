//! Counter-based seed derivation and the per-purpose random streams built on it.
//!
//! Every sample `i` of a dataset draws from a stream keyed by
//! `derive_seed(master, i)`, so samples can be produced in any order by any
//! number of workers without changing a single output byte.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic, counter-based random stream.
pub type Stream = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th stream under `master`.
///
/// `index -> master + (index + 1) * GAMMA` is a bijection modulo 2^64 because
/// the gamma is odd, and `mix64` is a bijection, so distinct indices never
/// share a seed.
#[inline]
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}

/// Purpose-separated sub-stream, e.g. noise vs scene layout of one sample.
pub fn substream(seed: u64, purpose: u64) -> Stream {
    stream(derive_seed(seed, purpose ^ 0xA5A5_0000_0000_0000))
}

/// Stateless hash of a seed and two lattice coordinates into [0, 1).
#[inline]
pub fn lattice_unit(seed: u64, x: i64, y: i64, salt: u64) -> f64 {
    let h = mix64(seed ^ mix64((x as u64).wrapping_mul(GOLDEN_GAMMA) ^ mix64(y as u64 ^ salt)));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
