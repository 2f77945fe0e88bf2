//! Seeded, splittable random streams.
//!
//! Every independent unit of simulation work (a 30 s block, a bootstrap run,
//! a calibration pass) draws from its own ChaCha stream selected by
//! `(seed, stream)`. Results therefore do not depend on how the work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream-id namespaces so that differently purposed streams never collide.
pub mod domain {
    pub const BLOCK: u64 = 0;
    pub const BOOTSTRAP: u64 = 1 << 40;
    pub const CALIBRATION: u64 = 2 << 40;
    pub const TEST: u64 = 3 << 40;
}

pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
