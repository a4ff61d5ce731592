//! Seed tree for reproducible parallel Monte Carlo.
//!
//! Every random stream is addressed by a path of tags from the master seed,
//! e.g. `master / loop / trajectory / BROWNIAN`. The stream for a path does not
//! depend on which thread consumes it or in which order paths are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tags for the per-trajectory streams.
pub mod stream {
    pub const BROWNIAN: u64 = 0x42_524f_574e;
    pub const SMALL_JUMP_NOISE: u64 = 0x53_4d41_4c4c;
    pub const JUMPS: u64 = 0x4a_554d_5053;
    pub const BRIDGE: u64 = 0x42_5249_4447;
    pub const INDEPENDENT_SMALL: u64 = 0x49_4e44_4550;
    pub const BOOTSTRAP: u64 = 0x42_4f4f_5453;
    pub const VALIDATION: u64 = 0x56_414c_4944;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree {
    key: u64,
}

impl SeedTree {
    pub fn new(master_seed: u64) -> Self {
        Self { key: splitmix64(master_seed) }
    }

    pub fn child(&self, tag: u64) -> Self {
        Self { key: splitmix64(self.key ^ splitmix64(tag.wrapping_add(0x632b_e59b_d9b4_e019))) }
    }

    pub fn path(&self, tags: &[u64]) -> Self {
        tags.iter().fold(*self, |node, &t| node.child(t))
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut k = self.key;
        for chunk in seed.chunks_exact_mut(8) {
            k = splitmix64(k);
            chunk.copy_from_slice(&k.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
