//! Named, splittable random streams.
//!
//! Every random draw in the crate comes from a [`Stream`] keyed by a base seed
//! plus a path of tags, so any sample, pilot matrix or noise vector can be
//! re-derived in isolation from the integers that name it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Stream = ChaCha8Rng;

/// Tags separating the independent uses of one base seed.
pub mod tag {
    pub const CHANNEL: u64 = 0x4348_414e;
    pub const PILOTS: u64 = 0x5049_4c54;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const SAMPLER: u64 = 0x534d_504c;
    pub const TRAIN: u64 = 0x5452_4e20;
    pub const INIT: u64 = 0x494e_4954;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const TRIAL: u64 = 0x5452_4c20;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream from `seed` and a tag path.
pub fn stream(seed: u64, path: &[u64]) -> Stream {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &t in path {
        state ^= t.wrapping_mul(0xd6e8_feb8_6659_fd93).rotate_left(17) ^ acc;
        acc = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}
