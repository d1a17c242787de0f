use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A deterministic generator for one named stream under a user seed.
pub(crate) fn seeded(seed: u64, stream: &str) -> ChaCha8Rng {
    let mut h = FnvHasher::with_key(seed ^ 0x9e37_79b9_7f4a_7c15);
    h.write(stream.as_bytes());
    ChaCha8Rng::seed_from_u64(h.finish() ^ seed)
}

/// Stable 64-bit hash of a string under a key.
pub(crate) fn stable_hash(key: u64, text: &str) -> u64 {
    let mut h = FnvHasher::with_key(key);
    h.write(text.as_bytes());
    h.finish()
}
