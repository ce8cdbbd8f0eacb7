//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`ParticleRng`], a ChaCha8
//! stream cipher generator. The 64-bit seed is expanded into the 256-bit
//! ChaCha key with `SeedableRng::seed_from_u64` (PCG32 expansion, fixed by
//! `rand_core`), and independent trials use distinct ChaCha stream ids, so
//! trial `i` of seed `s` always sees the same sequence regardless of which
//! other trials ran or in what order.
//!
//! Standard normals use the basic Box-Muller transform. Uniforms carry 53
//! random bits and live in the half-open interval (0, 1], which keeps the
//! logarithm finite.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Clone, Debug)]
pub struct ParticleRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl ParticleRng {
    /// Generator for `(seed, stream)`. Stream 0 is the default stream.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        ParticleRng { inner, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in (0, 1].
    pub fn uniform_open0(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.next_u64() >> 11) + 1) as f64 * SCALE
    }

    /// Standard normal draw via Box-Muller; the second variate of each pair
    /// is cached and returned by the next call.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open0();
        let u2 = self.uniform_open0();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}
