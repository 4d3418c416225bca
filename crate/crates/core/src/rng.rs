//! Seeded random streams.
//!
//! Every stochastic step draws from a stream derived from the run seed and a
//! path of integers (replication index, role, ...). Derivation is a pure
//! function of its inputs, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Role tags for the per-replication sub-streams.
pub const ROLE_DATA: u64 = 0;
pub const ROLE_FIT: u64 = 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `seed` together with `path` into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ (path.len() as u64).rotate_left(32));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

/// FNV-1a hash of a label, for deriving named streams such as `"eval"`.
pub fn tag(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn stream(seed: u64, path: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(seed, path))
}

/// Seed for a named sub-run, e.g. `derive_named(seed, "eval")`.
pub fn derive_named(seed: u64, label: &str) -> u64 {
    derive_seed(seed, &[tag(label)])
}
