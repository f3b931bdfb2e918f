//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed with the
//! 64-bit stream id selecting an independent keystream, so stream `i` can be
//! generated without touching streams `0..i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Derives a child seed from a master seed and a path of counters.
///
/// Each level keys a fresh stream by the parent seed and takes its first
/// word, so `derive_seed(s, &[a, b])` depends only on `(s, a, b)`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(master, |seed, &id| stream(seed, id).random::<u64>())
}

pub fn fill_standard_normal<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = rng.sample(StandardNormal);
    }
}
