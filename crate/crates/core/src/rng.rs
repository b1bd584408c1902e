//! Counter-based random streams.
//!
//! An [`RngStream`] is a `(seed, stream_id)` key into the ChaCha8 keystream
//! plus a count of sub-streams handed out so far. Every stochastic operator
//! takes `&mut RngStream`, splits one child off with
//! [`RngStream::next_substream`] and derives per-sample children from it with
//! [`RngStream::substream`], so samples can be generated in any order or in
//! parallel and still produce identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reproducible random stream keyed by `(seed, stream_id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    draws: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of sub-streams consumed through [`Self::next_substream`].
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Child stream with index `index`. Does not advance `self`.
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: mix(self.stream_id, index),
            draws: 0,
        }
    }

    /// Hands out the next child stream and advances the draw counter.
    pub fn next_substream(&mut self) -> RngStream {
        let child = self.substream(self.draws);
        self.draws += 1;
        child
    }

    /// A fresh generator positioned at the start of this stream's keystream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
