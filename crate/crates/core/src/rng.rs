//! Purpose-separated random streams.
//!
//! Every generation draws from three ChaCha8 streams keyed by the same master
//! seed, so adding draws for one purpose never shifts another:
//! seed-image choice, max-overlap tie-breaks, pool draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Seed = 0,
    TieBreak = 1,
    Pool = 2,
}

pub fn stream(master_seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(purpose as u64);
    rng
}
