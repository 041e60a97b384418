//! Counter-keyed random streams.
//!
//! Every random quantity in the crate is drawn from a stream whose seed is a
//! hash of `(base seed, purpose tag, coordinates)`. Values therefore do not
//! depend on the order in which entries are generated or on how work is
//! split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags keep streams for different uses disjoint.
pub mod tag {
    pub const LATENT: u64 = 0x4c41_5445_4e54;
    pub const REPLICATION: u64 = 0x5245_504c;
    pub const PROJECTION: u64 = 0x5052_4f4a;
    pub const DIAGONAL: u64 = 0x4449_4147;
    pub const POPULATION: u64 = 0x504f_5055;
    pub const DIRECTION: u64 = 0x4449_5245;
    pub const LEARNER: u64 = 0x4c45_4152;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `words` into `seed` with a SplitMix64 finaliser per word.
pub fn derive_seed(seed: u64, tag: u64, words: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(tag));
    for (i, &w) in words.iter().enumerate() {
        h = splitmix64(h ^ w.wrapping_add((i as u64).wrapping_mul(0xA24B_AED4_963E_E407)));
    }
    h
}

pub fn stream(seed: u64, tag: u64, words: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, tag, words))
}
