//! Counter-based seed derivation.
//!
//! Every random stream in a run is keyed by `(master, stream, index...)` and
//! hashed with the SplitMix64 finalizer, so streams are independent of the
//! order in which they are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags for the pipeline's random sources.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scene = 1,
    Observation = 2,
    Proposal = 3,
    Channel = 4,
    SirWeights = 5,
    Repetition = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(stream as u64));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn rng_for(master: u64, stream: Stream, indices: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, stream, indices))
}

/// Seed for repetition `rep` of a sweep point. Repetition 0 reuses the
/// master seed so a one-repetition sweep reproduces a plain run.
pub fn repetition_seed(master: u64, rep: u64) -> u64 {
    if rep == 0 {
        master
    } else {
        derive_seed(master, Stream::Repetition, &[rep])
    }
}
