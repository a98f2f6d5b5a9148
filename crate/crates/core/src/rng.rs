//! Deterministic random streams.
//!
//! Every stream is ChaCha20 (`rand_chacha::ChaCha20Rng`) with a 256-bit key
//! built from little-endian `(seed, domain, 0, 0)` and the stream id set to
//! `index`. Streams are therefore counter-addressed: trial `t` of sweep
//! point `p` always sees the same draws, whichever thread runs it and in
//! whatever order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::C64;

/// Domain tag for codebook generation.
pub const DOMAIN_CODEBOOK: u64 = 0x4853_5643_4342_4b00;

/// Domain tag for sweep trials; the low 32 bits carry the point index and
/// bit 31 distinguishes the schemes.
pub const DOMAIN_SWEEP: u64 = 0x4853_5643_0000_0000;

/// Opens stream `index` of the key `(seed, domain)`.
pub fn keyed_stream(seed: u64, domain: u64, index: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// One draw from `CN(0, variance)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * scale, im * scale)
}

/// Uniform random bits.
pub fn random_bits<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Vec<bool> {
    (0..count).map(|_| rng.random::<bool>()).collect()
}
