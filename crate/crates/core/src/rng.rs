//! Seeded random streams.
//!
//! Every stochastic stage draws from ChaCha20 keyed by the master seed,
//! with the stage (and, for repeated work, a trial index) selecting the
//! ChaCha stream. Streams are therefore independent of one another and of
//! the order in which stages run.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub use rand_chacha::ChaCha20Rng as Rng;

/// Stage identifiers. Values are part of the reproducibility contract.
pub mod stage {
    pub const EMISSION: u64 = 1;
    pub const HBT_SPLIT: u64 = 2;
    /// Background on the first detector; the second uses `BACKGROUND_2`.
    pub const BACKGROUND: u64 = 3;
    pub const DETECT_1: u64 = 4;
    pub const DETECT_2: u64 = 5;
    pub const LOSS: u64 = 6;
    pub const BACKGROUND_2: u64 = 7;
    /// Trials use `PLACEMENT + trial`.
    pub const PLACEMENT: u64 = 1 << 32;
}

pub fn stream(master_seed: u64, stage: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(stage);
    rng
}
