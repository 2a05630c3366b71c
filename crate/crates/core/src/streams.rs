//! Reproducible random streams.
//!
//! Every random quantity in the crate is a pure function of a `(seed, stream)`
//! pair: the seed keys a ChaCha8 generator and the stream id selects one of its
//! 2^64 independent counter-based sequences. Work can therefore be split across
//! threads in any order without changing a single draw.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::normal;

pub type Stream = ChaCha8Rng;

/// Generator for stream `stream` of the family keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for the `index`-th sub-task of `parent` (SplitMix64 finalizer
/// applied twice so that nearby parents and indices decorrelate).
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix(mix(parent).wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform variate on the open interval (0, 1), with 53 bits of resolution.
#[inline]
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variate by inversion of an open uniform.
#[inline]
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    normal::quantile(open_uniform(rng))
}

pub fn fill_standard_normal<R: RngCore + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = standard_normal(rng);
    }
}
