//! Seed derivation so that every window, node, tree and fold draws from its
//! own stream regardless of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer over `master` combined with `stream`.
pub fn derive(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, stream))
}

// Stream namespaces keep derived seeds of different consumers apart.
pub const STREAM_WALK: u64 = 0x5741_4c4b;
pub const STREAM_INIT: u64 = 0x494e_4954;
pub const STREAM_SGNS: u64 = 0x5347_4e53;
pub const STREAM_TREE: u64 = 0x5452_4545;
pub const STREAM_CELL: u64 = 0x4345_4c4c;
pub const STREAM_FOLD: u64 = 0x464f_4c44;
pub const STREAM_SMOTE: u64 = 0x534d_4f54;
