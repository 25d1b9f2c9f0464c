use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Counter-based generator keyed by `(seed, stream_key)`.
///
/// Two generators with the same key produce the same sequence on every
/// platform, so a draw can be reproduced from its key alone without any
/// shared mutable state.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream_key: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream_key: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_key);
        Self {
            seed,
            stream_key,
            inner,
        }
    }

    /// Generator for one `(parameter, step)` draw under a global seed.
    pub fn for_step(seed: u64, param_id: u64, step: u64) -> Self {
        Self::new(seed, stream_key(param_id, step))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_key(&self) -> u64 {
        self.stream_key
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a parameter id and a step counter into one stream key.
///
/// A plain xor would collide for swapped `(id, step)` pairs; hashing the id
/// first keeps keys distinct for all practical id/step ranges.
pub fn stream_key(param_id: u64, step: u64) -> u64 {
    splitmix64(param_id) ^ step
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_keys_equal_draws() {
        let mut a = Rng::new(42, 7);
        let mut b = Rng::new(42, 7);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = Rng::new(42, 7);
        let mut b = Rng::new(42, 8);
        let mut c = Rng::new(43, 7);
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
    }

    #[test]
    fn swapped_id_step_do_not_collide() {
        assert_ne!(stream_key(1, 2), stream_key(2, 1));
    }

    #[test]
    fn frozen_first_draw() {
        // Guards against silent changes in the underlying generator.
        assert_eq!(Rng::new(0, 0).next_u64(), 13080132717333068652);
        let u = Rng::new(0, 0).uniform();
        assert!((0.0..1.0).contains(&u));
    }
}
