//! Deterministic random streams keyed by `(master seed, stream index)`.
//!
//! Every replication of an experiment owns the ChaCha8 stream selected by its
//! index, so results do not depend on scheduling or worker count. ChaCha output
//! is specified bit-for-bit, which keeps paths reproducible across platforms.

use rand::distr::OpenClosed01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform source used by all samplers in this crate.
#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform draw on `(0, 1]`; never returns zero, so `u.powf(-x)` stays finite.
    #[inline]
    pub fn open_closed01(&mut self) -> f64 {
        self.inner.sample(OpenClosed01)
    }

    /// Uniform draw on `[0, 1)`.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}
