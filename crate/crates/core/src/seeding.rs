//! Deterministic seed derivation.
//!
//! Every random stream in the crate is derived from a base seed plus a
//! textual purpose tag and an index, so streams are independent of the
//! order in which they are requested.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stable 64-bit hash of a sequence of byte strings.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = FnvHasher::default();
    for p in parts {
        h.write(p);
        h.write_u8(0xff);
    }
    // FNV has weak low bits for short inputs; finish with a splitmix round.
    splitmix(h.finish())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed for `(seed, purpose, index)`.
pub fn derive(seed: u64, purpose: &str, index: u64) -> u64 {
    stable_hash(&[
        &seed.to_le_bytes(),
        purpose.as_bytes(),
        &index.to_le_bytes(),
    ])
}

/// RNG for `(seed, purpose, index)`.
pub fn rng(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, purpose, index))
}

/// A uniform draw in [0, 1) that depends only on its key.
pub fn unit(seed: u64, purpose: &str, key: &str) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(stable_hash(&[
        &seed.to_le_bytes(),
        purpose.as_bytes(),
        key.as_bytes(),
    ]));
    r.gen::<f64>()
}
