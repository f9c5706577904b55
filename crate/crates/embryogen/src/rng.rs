//! Counter-based derivation of independent random streams.
//!
//! Every stochastic site in the pipeline draws from a `ChaCha8` stream keyed
//! by the master seed plus a fixed domain tag and its counters (frame, object
//! id, view, ...). Parallel evaluation is therefore bit-identical to serial
//! execution regardless of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags. Never reorder or reuse values; streams are part of the
/// reproducibility contract.
pub mod domain {
    pub const GUIDE: u64 = 0x01;
    pub const VIDEO: u64 = 0x02;
    pub const INIT: u64 = 0x03;
    pub const DIVISION: u64 = 0x04;
    pub const CONTACT: u64 = 0x05;
    pub const AXIS: u64 = 0x06;
    pub const SHOT: u64 = 0x07;
    pub const GAUSS: u64 = 0x08;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix the master seed with a tag list into a single sub-seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &t in tags {
        state ^= t;
        out ^= splitmix64(&mut state);
    }
    out
}

/// Independent stream for `(seed, tags)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = derive_seed(seed, tags);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
