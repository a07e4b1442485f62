//! Counter-based random numbers.
//!
//! Every random draw is a pure function of `(seed, substream, domain, counters)`.
//! A sheet cell `(i, j)` always receives the same increment no matter which
//! order cells are generated in, how far the grid has been grown, or which
//! worker thread produced it.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Domain tags keep independent uses of one substream apart.
pub(crate) const DOMAIN_SHEET: u64 = 0x5348_4545_5400_0001;
pub(crate) const DOMAIN_BRIDGE: u64 = 0x4252_4944_4745_0002;

#[inline]
fn fmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed plus one-substream-per-replication assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPolicy {
    pub seed: u64,
    /// Substream used by replication 0; replication `r` uses `first_substream + r`.
    pub first_substream: u64,
}

impl RngPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            first_substream: 0,
        }
    }

    pub fn substream(&self, replication: u64) -> u64 {
        self.first_substream.wrapping_add(replication)
    }
}

/// Key for a stream identified by `(seed, substream, domain, a, b)`.
#[inline]
pub(crate) fn stream_key(seed: u64, substream: u64, domain: u64, a: u64, b: u64) -> u64 {
    leaf_key(prefix_key(seed, substream, domain, a), b)
}

/// The part of [`stream_key`] shared by every `b` under one `a`.
#[inline]
pub(crate) fn prefix_key(seed: u64, substream: u64, domain: u64, a: u64) -> u64 {
    let mut k = fmix64(seed ^ GOLDEN);
    k = fmix64(k ^ substream.wrapping_mul(GOLDEN));
    k = fmix64(k ^ domain);
    fmix64(k ^ a.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

#[inline]
pub(crate) fn leaf_key(prefix: u64, b: u64) -> u64 {
    fmix64(prefix ^ b.wrapping_mul(0xA076_1D64_78BD_642F))
}

/// A short SplitMix64 stream started from a derived key.
///
/// Used for the handful of words a single cell or bridge interval consumes.
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    #[inline]
    pub fn from_key(key: u64) -> Self {
        Self { state: key }
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        fmix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let w = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}

/// Standard normal draw attached to sheet cell `(i, j)`.
#[inline]
#[cfg(test)]
pub(crate) fn cell_normal(seed: u64, substream: u64, i: u64, j: u64) -> f64 {
    row_normal(sheet_row_key(seed, substream, i), j)
}

/// Key shared by the cells of sheet row `i`.
#[inline]
pub(crate) fn sheet_row_key(seed: u64, substream: u64, i: u64) -> u64 {
    prefix_key(seed, substream, DOMAIN_SHEET, i)
}

/// [`cell_normal`] for column `j` given the row key.
#[inline]
pub(crate) fn row_normal(row_key: u64, j: u64) -> f64 {
    let mut rng = CounterRng::from_key(leaf_key(row_key, j));
    StandardNormal.sample(&mut rng)
}
