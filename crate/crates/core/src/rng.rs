//! Counter-based random streams.
//!
//! Every trajectory owns a `(seed, stream)` pair. The main driving sequence is
//! ChaCha8 on that stream; auxiliary draws (Brownian-bridge refinements) seek
//! to a position computed from `(tag, index)` so they never depend on how many
//! draws happened before. Results are therefore independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

/// Words reserved per `(index, tag)` slot.
const SLOT_BITS: u32 = 24;

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngSpec { seed, stream }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        RngSpec { stream, ..self }
    }

    /// Spec for member `i` of an ensemble rooted at `self`.
    pub fn member(&self, i: u64) -> RngSpec {
        debug_assert!(i < 1 << 32);
        RngSpec { seed: self.seed, stream: (self.stream << 32) | i }
    }

    /// The sequential stream.
    pub fn driving(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// A seekable side stream keyed by `(tag, index)`; `tag < 256`,
    /// `index < 2^36`.
    pub fn substream(&self, tag: u8, index: u64) -> ChaCha8Rng {
        debug_assert!(index < 1 << 36);
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ 0x5bd1_e995_0bad_cafe));
        rng.set_stream(self.stream);
        rng.set_word_pos((((index as u128) << 8) | tag as u128) << SLOT_BITS);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
