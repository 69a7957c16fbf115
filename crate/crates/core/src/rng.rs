//! Deterministic uniform streams for reproducible parallel simulation.
//!
//! A [`RandomStream`] is a ChaCha8 keystream. The key is derived from the
//! master seed and the ChaCha stream id is the stream index, so every
//! `(master_seed, stream_index)` pair addresses its own independent
//! sequence. Each uniform consumes exactly one 64-bit output, which makes
//! the draw counter a seekable position.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const U53_SCALE: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    master_seed: u64,
    stream_index: u64,
    draws: u64,
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            rng,
            master_seed,
            stream_index,
            draws: 0,
        }
    }

    /// Opens the stream positioned after `draws` uniforms have been consumed.
    pub fn at_position(master_seed: u64, stream_index: u64, draws: u64) -> Self {
        let mut stream = Self::new(master_seed, stream_index);
        stream.seek(draws);
        stream
    }

    pub fn seek(&mut self, draws: u64) {
        // two 32-bit keystream words per uniform
        self.rng.set_word_pos(u128::from(draws) * 2);
        self.draws = draws;
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Number of uniforms consumed so far.
    pub fn position(&self) -> u64 {
        self.draws
    }

    /// Uniform draw on `[0, 1)` with 53 bits of resolution.
    pub fn next_uniform(&mut self) -> f64 {
        self.draws += 1;
        (self.rng.next_u64() >> 11) as f64 * U53_SCALE
    }

    /// Uniform draw on `(0, 1]`; safe to pass to `ln`.
    pub fn next_open_uniform(&mut self) -> f64 {
        1.0 - self.next_uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_uniform() < p
    }

    /// Standard normal draw by Box–Muller. Always consumes two uniforms; the
    /// sine branch is discarded so draw counts stay aligned across designs.
    pub fn standard_normal(&mut self) -> f64 {
        let radius = (-2.0 * self.next_open_uniform().ln()).sqrt();
        let angle = std::f64::consts::TAU * self.next_uniform();
        radius * angle.cos()
    }

    /// Uniform index in `0..len`.
    pub fn index(&mut self, len: u64) -> u64 {
        debug_assert!(len > 0);
        ((self.next_uniform() * len as f64) as u64).min(len - 1)
    }
}
