//! Deterministic random-number substreams.
//!
//! Every trial draws from its own ChaCha8 stream: the key is derived from the
//! master seed and the 64-bit stream id is `(point_index << 40) | trial_index`.
//! A trial's random numbers therefore depend only on `(seed, point, trial)`,
//! never on how trials are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TRIAL_BITS: u32 = 40;

/// Largest trial index representable in a stream id.
pub const MAX_TRIALS_PER_POINT: u64 = 1 << TRIAL_BITS;

pub fn stream_id(point: u64, trial: u64) -> u64 {
    debug_assert!(trial < MAX_TRIALS_PER_POINT);
    (point << TRIAL_BITS) | trial
}

pub fn substream(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

pub fn trial_rng(master_seed: u64, point: u64, trial: u64) -> ChaCha8Rng {
    substream(master_seed, stream_id(point, trial))
}
