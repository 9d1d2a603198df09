//! Seeded random streams.
//!
//! Every stochastic component draws from a [`ChaCha8Rng`], which is a
//! counter-mode generator: a `(seed, stream)` pair addresses an independent
//! sequence, so logged seeds replay episodes exactly and parallel workers can
//! be handed fixed streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand::Rng;
pub use rand_chacha::ChaCha8Rng as PushRng;

/// Generator for `seed` on the default stream.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `seed` on an explicit stream.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed from a parent seed and a tag (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal draw.
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}
