//! Seeded substream derivation.
//!
//! Every stochastic component takes a master seed and a path of indices
//! (trial number, parameter index, replicate block, ...) and derives an
//! independent ChaCha stream from them. Two runs with the same seed and
//! path produce bit-identical draw sequences, regardless of what other
//! substreams were consumed in between.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mix a master seed with a path of indices into a single stream key.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(seed);
    for &p in path {
        s = splitmix64(s ^ splitmix64(p.wrapping_add(0xa076_1d64_78bd_642f)));
    }
    s
}

/// RNG for the substream identified by `(seed, path)`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_key(seed, path))
}
