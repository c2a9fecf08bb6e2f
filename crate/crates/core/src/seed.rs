//! Seed derivation for reproducible multi-stage experiments.
//!
//! Every stage of a pipeline draws its randomness from
//! `stage_seed(master, name)`: the stage name is hashed with 64-bit FNV-1a,
//! mixed into the master seed and finalized with the SplitMix64 output
//! function. The mapping is fixed and platform independent, so a config file
//! plus its master seed pins every artifact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stage called `stage`, derived from `master`.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    splitmix64(master ^ fnv1a(stage.as_bytes()))
}

/// Seed for the `index`-th member of a family of jobs (grid candidates, tiers).
pub fn indexed_seed(master: u64, stage: &str, index: u64) -> u64 {
    splitmix64(stage_seed(master, stage) ^ splitmix64(index))
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
