//! Keyed random streams.
//!
//! A stream is ChaCha8 keyed by the user seed, with the ChaCha stream id set
//! to a substream index (the setting-pair index in simulations). Each shot
//! consumes a fixed number of 64-bit words, so the draw for
//! `(seed, pair, shot)` sits at a fixed counter position and can be reached
//! by seeking. Results never depend on which thread evaluates a pair.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, substream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(substream);
        Self { rng }
    }

    /// Position the stream at the first draw of `shot`, given that every
    /// shot consumes `draws_per_shot` uniforms.
    pub fn seek_shot(&mut self, shot: u64, draws_per_shot: u64) {
        // Word positions count 32-bit words; each uniform consumes one u64.
        self.rng
            .set_word_pos(u128::from(shot) * u128::from(draws_per_shot) * 2);
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn rng(&mut self) -> &mut impl Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_draws() {
        let mut a = Stream::new(42, 3);
        let mut b = Stream::new(42, 3);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn substreams_and_seeds_differ() {
        let x = Stream::new(42, 0).uniform();
        assert_ne!(x, Stream::new(42, 1).uniform());
        assert_ne!(x, Stream::new(43, 0).uniform());
    }

    #[test]
    fn seeking_matches_sequential_consumption() {
        let mut seq = Stream::new(7, 2);
        let draws: Vec<f64> = (0..30).map(|_| seq.uniform()).collect();
        let mut s = Stream::new(7, 2);
        s.seek_shot(4, 3);
        assert_eq!(s.uniform(), draws[12]);
        assert_eq!(s.uniform(), draws[13]);
        s.seek_shot(0, 3);
        assert_eq!(s.uniform(), draws[0]);
    }

    #[test]
    fn uniform_range() {
        let mut s = Stream::new(1, 0);
        let mut sum = 0.0;
        for _ in 0..100_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        assert!((sum / 100_000.0 - 0.5).abs() < 0.005);
    }
}
