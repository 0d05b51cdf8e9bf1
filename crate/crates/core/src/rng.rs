//! Counter-based random streams.
//!
//! Every stream is addressed by a `(master_seed, stream_id)` pair and every
//! value inside a stream by its position, so draws can be generated in any
//! order or split across workers and still reproduce the sequential result.
//! The mixing function is the SplitMix64 finalizer.

use rand::RngCore;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream ids used by the pipelines and the CLI.
pub mod streams {
    pub const PILOT: u64 = 1;
    pub const MAIN: u64 = 2;
    pub const MONTE_CARLO: u64 = 3;
    pub const CV_FOLDS: u64 = 4;
    pub const COVARIATES: u64 = 10;
    pub const RESPONSE: u64 = 11;
    /// Bootstrap draw `k` uses stream `BOOTSTRAP_BASE + k`.
    pub const BOOTSTRAP_BASE: u64 = 1000;
}

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub(crate) fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Seed for replication `j` of an experiment: the master seed shifted by `j`.
    pub fn replication(master_seed: u64, j: u64, stream_id: u64) -> Self {
        Self::new(master_seed.wrapping_add(j), stream_id)
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self::new(self.master_seed, stream_id)
    }

    fn key(&self) -> u64 {
        mix64(mix64(self.master_seed ^ GOLDEN).wrapping_add(mix64(self.stream_id.wrapping_add(0xD1B5_4A32_D192_ED03))))
    }

    /// Sequential generator over this stream.
    pub fn rng(&self) -> StreamRng {
        StreamRng::from_key(self.key())
    }

    /// Independent child generator addressed by `index` (a row, a draw, ...).
    pub fn substream(&self, index: u64) -> StreamRng {
        StreamRng::from_key(mix64(self.key() ^ mix64(index.wrapping_add(GOLDEN))))
    }

    /// Uniform in `[0, 1)` at position `index` of this stream, without state.
    pub fn uniform_at(&self, index: u64) -> f64 {
        to_unit(StreamRng::from_key(self.key()).value_at(index))
    }
}

/// SplitMix64 viewed as a counter-based generator: the value at position `i`
/// is `mix64(key + (i + 1) * GOLDEN)`.
#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    fn from_key(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    #[inline]
    pub fn value_at(&self, index: u64) -> u64 {
        mix64(self.key.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        to_unit(self.next_u64())
    }
}

impl RngCore for StreamRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let v = self.value_at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
