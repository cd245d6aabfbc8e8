//! Seed derivation.
//!
//! Every stochastic step draws from its own ChaCha stream whose seed is a hash
//! of the run seed and the step's coordinates (client, round, ...). Work can
//! therefore run in any order or on any number of threads with identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags keep derived seeds of different purposes apart.
pub(crate) const TAG_CLIENT_DATA: u64 = 0x6461_7461;
pub(crate) const TAG_CLIENT_UPDATE: u64 = 0x7570_6474;
pub(crate) const TAG_SERVER: u64 = 0x7365_7276;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a sequence of words.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Seed of the local shuffle stream used by client `client` in round `round`.
pub fn client_seed(seed: u64, round: usize, client: usize) -> u64 {
    derive_seed(&[seed, TAG_CLIENT_UPDATE, round as u64, client as u64])
}

/// Seed of the server-side sampling stream for round `round`.
pub fn server_seed(seed: u64, round: usize) -> u64 {
    derive_seed(&[seed, TAG_SERVER, round as u64])
}
