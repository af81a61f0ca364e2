//! Seed derivation for reproducible, parallel-safe random streams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] whose
//! 64-bit seed is derived from a master seed and a stream index:
//!
//! ```text
//! substream(master, i) = mix(master ^ mix(i + 0x9E3779B97F4A7C15))
//! ```
//!
//! where `mix` is the SplitMix64 finalizer. Each step is a bijection of
//! `u64`, so for a fixed master seed distinct indices always give distinct
//! stream seeds. Streams nest: [`SeedSpec::child`] turns a substream seed into
//! a new master, which is how outer and inner Monte Carlo loops get
//! independent, index-addressed streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Master seed plus the fixed substream derivation rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub const fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Seed of substream `index`.
    #[inline]
    pub fn substream_seed(&self, index: u64) -> u64 {
        mix64(self.master_seed ^ mix64(index.wrapping_add(GOLDEN_GAMMA)))
    }

    /// Independent generator for substream `index`.
    #[inline]
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.substream_seed(index))
    }

    /// A nested seed whose own substreams are independent of this one's.
    #[inline]
    pub fn child(&self, index: u64) -> SeedSpec {
        SeedSpec::new(self.substream_seed(index))
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::new(0x5EED)
    }
}
