//! Seeded randomness plumbing.
//!
//! Every trial owns exactly one generator, seeded from a 64-bit value, and
//! draws from it in a documented order (pair/partner selection first, then
//! any per-agent decisions). ChaCha8 is used because its stream is stable
//! across platforms and releases, which keeps golden trial records valid.

use rand::SeedableRng;

pub type TrialRng = rand_chacha::ChaCha8Rng;

pub fn trial_rng(seed: u64) -> TrialRng {
    TrialRng::seed_from_u64(seed)
}
