//! Seeded random streams.
//!
//! Every replicate or random instance gets its own ChaCha8 stream: the key comes from the
//! user seed and the 64-bit stream id from the replicate index. Results therefore depend only
//! on `(seed, index)` and never on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
