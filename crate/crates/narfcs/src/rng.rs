//! Seed derivation and random streams.
//!
//! A single root seed has to drive many independent consumers: one stream per
//! chain, one derived seed per sweep cell, per calibration evaluation, per
//! simulation replicate. Chains use the ChaCha stream counter (one cipher key,
//! many streams), while the other consumers get fresh 64-bit seeds produced by
//! a splitmix64 mix of the root seed and a salt. Both constructions are
//! order-independent, so parallel execution cannot change any result.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The random stream type used throughout the crate.
pub type Stream = ChaCha12Rng;

/// Stream for chain `chain` of a run seeded with `seed`.
pub fn chain_stream(seed: u64, chain: usize) -> Stream {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Derive an independent 64-bit seed from a root seed and a salt
/// (splitmix64 finalizer over their combination).
pub fn derive_seed(root: u64, salt: u64) -> u64 {
    let mut z = root ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Salt namespaces keeping the derived-seed domains disjoint.
pub mod salt {
    pub const SWEEP_CELL: u64 = 0x5357_4545_5000_0000; // + cell index
    pub const CALIBRATION_EVAL: u64 = 0x4341_4C49_4200_0000; // + evaluation run index
    pub const REPLICATE: u64 = 0x5245_504C_4900_0000; // + replicate index
    pub const SIM_VALUES: u64 = 0x5349_4D56_414C_5345;
    pub const SIM_MASK: u64 = 0x5349_4D4D_4153_4B00;
    pub const SIM_PILOT: u64 = 0x5349_4D50_494C_4F54;
}
