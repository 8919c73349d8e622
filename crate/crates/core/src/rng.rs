//! Seeded random streams.
//!
//! Every random quantity is drawn from a [`Stream`] built from a 64-bit seed.
//! Sub-streams for sweep points and Monte Carlo batches are derived by
//! hashing `(parent seed, tag, index)`, so results never depend on how work
//! is scheduled.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable across platforms and releases, unlike `std::hash`.
fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed for sub-stream `index` of `tag` under `parent`.
pub fn derive_seed(parent: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ fnv1a(tag)).wrapping_add(splitmix64(index)))
}

/// One CN(0, 1) draw: real and imaginary parts are N(0, 1/2).
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
