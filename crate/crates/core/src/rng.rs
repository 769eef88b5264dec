//! Seeded noise sources.
//!
//! Every random draw in the crate flows from a `(master_seed, trial, stream)`
//! triple so that results never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type NoiseRng = ChaCha8Rng;

/// Independent streams inside one trial. Plant noise for every channel comes
/// from one stream, so perturbing one channel never shifts another's draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Process = 1,
    Measurement = 2,
    Drift = 3,
    Observer = 4,
    Payload = 5,
    Bootstrap = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for trial `index` of a run with `master` seed.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn stream_rng(trial_seed: u64, stream: Stream) -> NoiseRng {
    NoiseRng::seed_from_u64(splitmix64(trial_seed ^ (stream as u64).rotate_left(32)))
}

pub fn seeded(seed: u64) -> NoiseRng {
    NoiseRng::seed_from_u64(seed)
}
