//! Seeded random streams.
//!
//! Every random decision in the toolkit draws from a ChaCha8 generator keyed
//! by an integer seed and a component tag. The tag selects an independent
//! ChaCha stream, so two components fed the same seed never share draws.
//!
//! Seed derivation used across the crate, with `seed` the user's `--seed`:
//!
//! | consumer                      | seed                   | stream        |
//! |-------------------------------|------------------------|---------------|
//! | initial labeled set           | `seed`                 | `SEED_POOL`   |
//! | pool-cap subsample, iter `t`  | `seed + t`             | `POOL_CAP`    |
//! | random selection, iter `t`    | `seed + t`             | `RANDOM`      |
//! | k-means in stratum `i`        | `seed + t + i`         | `KMEANS`      |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SEED_POOL: u64 = 1;
pub const POOL_CAP: u64 = 2;
pub const RANDOM: u64 = 3;
pub const KMEANS: u64 = 4;

pub fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Uniform sample without replacement of `amount` items, returned in draw
/// order. Input order matters for determinism, so callers pass sorted ids.
pub fn sample<T: Clone>(items: &[T], amount: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    rand::seq::index::sample(rng, items.len(), amount.min(items.len()))
        .into_iter()
        .map(|i| items[i].clone())
        .collect()
}
