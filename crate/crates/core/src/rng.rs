//! Seed derivation. Every stochastic stage draws from its own ChaCha8 stream
//! so changing one stage (e.g. the SNR) never perturbs another stage's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scenario = 0,
    Offsets = 1,
    Noise = 2,
    ViInit = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Per-trial seed, `base XOR trial`. Independent of scheduling order.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    base ^ trial
}
