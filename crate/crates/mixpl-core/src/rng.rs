//! Deterministic RNG streams.
//!
//! Every randomized operation takes an explicit RNG so that a run is a pure
//! function of its seed. Per-image streams are derived from
//! `(root seed, image id, salt)` so images can be processed concurrently
//! without coordinating on a shared generator.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Root RNG for a run.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream keyed by `parts` (e.g. image id, stage index).
///
/// Uses splitmix64 over the concatenated words, which is enough to decorrelate
/// streams; ChaCha then supplies the actual random sequence.
pub fn derived(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        state = splitmix64(state.wrapping_add(p));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
