//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit stream. Streams are derived
//! from a 64-bit base seed plus an index path (sample, repeat, trajectory,
//! ...), so parallel work draws the same numbers no matter which thread
//! picks it up or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for `seed` with no sub-path.
pub fn seeded(seed: u64) -> Stream {
    stream(seed, &[])
}

/// 64-bit seed derived from `(seed, path…)`.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut key = splitmix64(&mut state);
    for (depth, &p) in path.iter().enumerate() {
        let mut s = key ^ p.wrapping_mul(GOLDEN).rotate_left(depth as u32 + 1);
        key = splitmix64(&mut s) ^ splitmix64(&mut s).rotate_left(17);
    }
    key
}

/// Stream keyed by `(seed, path[0], path[1], ...)`.
pub fn stream(seed: u64, path: &[u64]) -> Stream {
    let key = derive(seed, path);
    let mut bytes = [0u8; 32];
    let mut s = key;
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
