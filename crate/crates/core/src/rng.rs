//! Deterministic derivation of independent random streams from one master seed.
//!
//! Every random draw in the chain comes from a `ChaCha8Rng` keyed by
//! `(master seed, stream id, index)`, so frames, nodes, and grid cells can be
//! generated in any order (or in parallel) and still reproduce bit-identically.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sub-stream identifiers under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Fading channel taps (per frame when dynamic, index 0 when static).
    Channel = 1,
    NoiseAlice = 2,
    NoiseBob = 3,
    NoiseEve = 4,
    /// Train/test shuffle inside the entropy estimators.
    EstimatorSplit = 5,
    /// Per-cell seeds of an experiment grid.
    GridCell = 6,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha stream keyed by `(seed, stream, index)`.
pub fn derive_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut state = seed;
    let w0 = splitmix64(&mut state);
    state ^= stream as u64;
    let w1 = splitmix64(&mut state);
    state ^= index;
    let w2 = splitmix64(&mut state);
    let w3 = splitmix64(&mut state);

    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&w0.to_le_bytes());
    key[8..16].copy_from_slice(&w1.to_le_bytes());
    key[16..24].copy_from_slice(&w2.to_le_bytes());
    key[24..32].copy_from_slice(&w3.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// 64-bit sub-seed for `(seed, stream, index)`, e.g. per grid cell.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut state = seed ^ (stream as u64).rotate_left(32);
    let _ = splitmix64(&mut state);
    state ^= index;
    splitmix64(&mut state)
}
