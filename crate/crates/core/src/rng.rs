//! Seeded, splittable random streams.
//!
//! Every random draw in the crate comes from a [`Stream`] derived from a root
//! seed by a path of integer keys, e.g. `root.child(trial).child(worker)`.
//! Two streams with different paths are statistically independent, and a
//! stream's output depends only on its path. This is what lets trials and
//! workers run in parallel without changing any result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator handed out by [`Stream::rng`].
pub type StreamRng = ChaCha8Rng;

/// A node in the seed derivation tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Stream(u64);

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream(splitmix64(seed))
    }

    /// Derives an independent sub-stream keyed by `key`.
    pub fn child(self, key: u64) -> Self {
        Stream(splitmix64(
            self.0 ^ splitmix64(key.wrapping_add(0xA076_1D64_78BD_642F)),
        ))
    }

    pub fn rng(self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Well-known keys for the top-level domains of an experiment.
pub mod keys {
    pub const PLACEMENT: u64 = 1;
    pub const LATENCY: u64 = 2;
    pub const CODE: u64 = 3;
    pub const TRIALS: u64 = 4;
    pub const WEIGHTS: u64 = 5;
    pub const EXAMPLES: u64 = 6;
    pub const OPTIMIZER: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
