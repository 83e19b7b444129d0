//! Deterministic random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by
//! `(seed, kind, index)`, so adding draws in one place never shifts the
//! sequence seen by another.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Namespaces for independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    Init,
    TrainScenario,
    Exploration,
    Replay,
    TestScenario,
    TestPolicy,
    Misc,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Init => 0x01,
            StreamKind::TrainScenario => 0x02,
            StreamKind::Exploration => 0x03,
            StreamKind::Replay => 0x04,
            // Test namespaces sit far from the training ones.
            StreamKind::TestScenario => 0x1000_0001,
            StreamKind::TestPolicy => 0x1000_0002,
            StreamKind::Misc => 0x7fff_ffff,
        }
    }
}

/// A seeded, reproducible random number stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, kind: StreamKind, index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&kind.tag().to_le_bytes());
        key[16..24].copy_from_slice(&index.to_le_bytes());
        key[24..].copy_from_slice(b"hetnav\0\0");
        Self {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(seed, StreamKind::Misc, 0)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.gen::<f64>()
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
