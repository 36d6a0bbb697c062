//! Seeded random streams.
//!
//! Derivation rule: the 64-bit run seed is expanded into a ChaCha8 key with
//! `seed_from_u64`, and replicate `i` reads ChaCha stream number `i` under
//! that key. Streams are disjoint counter ranges of one keyed generator, so
//! replicates never overlap and any replicate can be regenerated on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
