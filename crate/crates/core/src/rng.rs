//! Counter-based random streams.
//!
//! Every random decision in the crate draws from a [`ChaCha8Rng`] keyed by the
//! experiment seed and a stream number derived from *what* is being sampled,
//! never from *when* a thread got to it. Parallel and serial runs therefore
//! produce the same numbers.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// An independent stream for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs a few small counters into one stream id.
///
/// `tag` distinguishes subsystems, `a` and `b` are e.g. round and pair index.
pub fn stream_id(tag: u8, a: u32, b: u32) -> u64 {
    (u64::from(tag) << 56) ^ (u64::from(a) << 24) ^ u64::from(b)
}

/// Uniform on the open interval (0, 1).
pub fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
