//! Deterministic random streams.
//!
//! Every replicate draws from its own ChaCha stream keyed by
//! `(seed, domain, replicate)`, so results never depend on which worker
//! thread evaluates which replicate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Purpose tags keep streams used for different things disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    Potential,
    Calibration,
    PartnerSubsample,
    Verification,
    Auxiliary(u32),
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Potential => 0x5054_4e4c,
            Domain::Calibration => 0x4341_4c42,
            Domain::PartnerSubsample => 0x5041_5254,
            Domain::Verification => 0x5645_5249,
            Domain::Auxiliary(k) => 0x4155_5800_0000_0000 | k as u64,
        }
    }
}

/// Record of how a stream was derived; stored alongside samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub domain: Domain,
    pub replicate: u64,
}

impl StreamKey {
    pub fn new(seed: u64, domain: Domain, replicate: u64) -> Self {
        Self {
            seed,
            domain,
            replicate,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(self.domain.tag())));
        rng.set_stream(self.replicate);
        rng
    }
}

/// Convenience wrapper for `StreamKey::new(..).rng()`.
pub fn stream(seed: u64, domain: Domain, replicate: u64) -> ChaCha8Rng {
    StreamKey::new(seed, domain, replicate).rng()
}

/// Mix an integer into a well-spread 64-bit key.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed, e.g. per grid cell of a scan.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}
