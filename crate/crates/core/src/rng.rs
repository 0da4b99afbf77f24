//! Seeded, counter-derived random streams.
//!
//! Every stochastic operation takes an explicit generator. Campaigns derive
//! one independent ChaCha stream per (run, purpose) pair so a trajectory is
//! reproducible from the scenario seed alone, regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags for substreams within a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Truth = 1,
    Channel = 2,
    Gaf = 3,
    Smc = 4,
    StandardPf = 5,
    PfRd = 6,
    Diagnostics = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Plain generator from a 64-bit seed.
pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Independent stream for `(run, purpose)` under a campaign seed.
pub fn substream(seed: u64, run: u64, purpose: Purpose) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(splitmix64(run ^ splitmix64(purpose as u64)));
    rng
}
