//! Seeded RNG streams for reproducible, parallelizable Monte Carlo work.
//!
//! Every simulation entry point takes an explicit `&mut impl Rng`. The
//! harness keys one substream per (grid point, replication) so that results
//! are identical no matter how replications are partitioned across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The RNG used throughout the crate when a concrete generator is needed.
pub type Stream = ChaCha12Rng;

/// SplitMix64 finalizer; good avalanche for deriving stream keys.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Top-level stream for a user-provided seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha12Rng::seed_from_u64(splitmix64(seed))
}

/// Independent substream keyed by `tags` (e.g. task, grid index, replication).
///
/// Distinct tag sequences map to distinct ChaCha seeds, so substreams are
/// non-overlapping for all practical purposes.
pub fn substream(seed: u64, tags: &[u64]) -> Stream {
    let mut key = splitmix64(seed);
    for &t in tags {
        key = splitmix64(key ^ splitmix64(t.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    ChaCha12Rng::seed_from_u64(key)
}
