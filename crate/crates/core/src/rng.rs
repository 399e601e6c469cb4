//! Seeded, splittable random streams.
//!
//! Every replicate draws from its own ChaCha8 stream: the key comes from the
//! master seed and the stream id is the replicate index. ChaCha is counter
//! based, so a replicate's numbers do not depend on which worker runs it or
//! in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// Where a path's randomness came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master_seed: u64,
    pub stream: u64,
}

pub fn stream_rng(master_seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

impl SeedRecord {
    pub fn rng(&self) -> StreamRng {
        stream_rng(self.master_seed, self.stream)
    }
}

/// Uniform on `[0, 1)` from the top 53 bits of one `u64`.
#[inline(always)]
pub fn unit_f64<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
