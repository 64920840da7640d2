//! Seeded, portable random streams.
//!
//! Everything stochastic in the toolkit draws from ChaCha8 streams derived
//! from a single base seed. A stream is identified by `(base seed,
//! replication id, purpose tag)`; the tag is hashed with FNV-1a and the
//! triple is mixed through splitmix64. Replications and purposes therefore
//! get independent, reproducible streams on every platform, and results are
//! a pure function of the base seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 mixing step.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives the sub-seed for `(base, replication, purpose)`.
pub fn derive_seed(base: u64, replication: u64, purpose: &str) -> u64 {
    let mut s = splitmix64(base);
    s = splitmix64(s ^ replication);
    splitmix64(s ^ fnv1a(purpose.as_bytes()))
}

/// A fresh ChaCha8 stream for `(base, replication, purpose)`.
pub fn derive_rng(base: u64, replication: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, replication, purpose))
}
