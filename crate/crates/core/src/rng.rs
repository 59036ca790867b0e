//! Seeded random streams.
//!
//! Every chain draws from ChaCha8 keyed by the experiment seed, with the
//! replica index selecting an independent stream, so results depend only on
//! `(seed, replica)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
