//! Named, counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose key is
//! derived from the root seed through a chain of tags (purpose, level,
//! repeat...) and whose stream id is the particle index. Two runs with the
//! same root seed therefore see the same numbers regardless of how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tags for the top-level substreams.
pub mod tag {
    pub const DATA_NOISE: u64 = 0x01;
    pub const GROUND_TRUTH: u64 = 0x02;
    pub const REPEAT: u64 = 0x03;
    pub const REJECTION: u64 = 0x10;
    pub const RESAMPLE: u64 = 0x11;
    pub const MUTATION: u64 = 0x12;
    pub const TRUE_PARAMETER: u64 = 0x20;
    pub const PRIOR_DRAWS: u64 = 0x21;
    pub const SINGLE_LEVEL: u64 = 0x30;
    pub const MULTILEVEL: u64 = 0x31;
    pub const PILOT: u64 = 0x32;
    pub const PROBE: u64 = 0x33;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    pub fn new(root: u64) -> Self {
        Seed(root)
    }

    /// Child seed for `tag`; distinct tags give unrelated children.
    pub fn derive(self, tag: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    pub fn derive_all(self, tags: &[u64]) -> Seed {
        tags.iter().fold(self, |s, &t| s.derive(t))
    }

    /// Stream `id` under this key.
    pub fn stream(self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(id);
        rng
    }

    pub fn rng(self) -> ChaCha8Rng {
        self.stream(0)
    }
}
