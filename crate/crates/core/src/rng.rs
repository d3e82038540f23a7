//! Seed splitting.
//!
//! Every random draw in a run comes from a ChaCha8 generator keyed by the
//! master seed. Purposes are separated by the ChaCha stream id, so the draws
//! for one purpose never depend on how many draws another purpose consumed:
//!
//! | stream                        | purpose                          |
//! |-------------------------------|----------------------------------|
//! | `TOPOLOGY + attempt`          | topology placement               |
//! | `FADING + attempt`            | small-scale fading               |
//! | `FEEDBACK + pair`             | ACK/NACK sampling for one pair   |
//!
//! `attempt` counts redraws when a run asks for a feasible instance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TOPOLOGY: u64 = 1 << 32;
pub const FADING: u64 = 2 << 32;
pub const FEEDBACK: u64 = 3 << 32;

pub fn stream(master_seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id);
    rng
}
