//! Seeded random sources.
//!
//! Every stochastic routine takes an explicit `u64` seed. Independent
//! sub-streams (trials, workers) are derived with [`substream`] so results do
//! not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` of the generator family rooted at `seed`.
pub fn substream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
