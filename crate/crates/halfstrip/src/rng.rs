//! Reproducible parallel randomness: one counter-based stream per trial,
//! derived from the master seed and the trial index. Trials can run on any
//! number of workers and still consume identical random sequences.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG stream for `trial` under `master_seed`.
pub fn trial_stream(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}
