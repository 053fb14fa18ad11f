//! Seeded random streams.
//!
//! Every stochastic consumer draws from its own ChaCha8 stream keyed by the
//! run seed and a fixed stream id, so adding a consumer never shifts the
//! sequence seen by another one.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Named noise consumers. The discriminant is the stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    VehicleForce = 1,
    VehicleMoment = 2,
    AccelBias = 3,
    GyroBias = 4,
    AccelNoise = 5,
    GyroNoise = 6,
    Ranger = 7,
    Perturbation = 8,
    InitialBias = 9,
    PixelNoise = 10,
}

/// A deterministic random stream.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn stream(seed: u64, stream: Stream) -> Self {
        Self::new(seed, stream as u64)
    }

    /// Sub-stream `index` of a named consumer, e.g. one per gate.
    pub fn substream(seed: u64, stream: Stream, index: u64) -> Self {
        Self::new(seed, ((stream as u64) << 32) | (index & 0xffff_ffff))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw from the closed interval `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.inner.random_range(lo..=hi)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
