//! Reproducible per-path streams of standard normal variates.
//!
//! Every path owns its own stream, addressed by `(master_seed, path_index)`.
//! The master seed is expanded to a 256-bit ChaCha8 key with SplitMix64, and
//! the path index selects one of the 2^64 independent ChaCha streams under
//! that key. ChaCha is counter-based, so no stream depends on how many values
//! another stream has consumed, and ensemble results do not depend on
//! execution order or worker count.
//!
//! Uniform output is turned into normals with the ziggurat sampler of
//! `rand_distr::StandardNormal`. Both pieces are pinned by the lock file, so
//! a given build produces bit-identical sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Address of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub path_index: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        Self {
            master_seed,
            path_index,
        }
    }
}

/// One step of the SplitMix64 generator: advances `state` and returns a
/// well-mixed output word.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a tuple of words.
///
/// Used to give each sweep cell its own master seed.
pub fn derive_seed(master_seed: u64, words: &[u64]) -> u64 {
    let mut state = master_seed;
    let mut out = splitmix64(&mut state);
    for &w in words {
        state ^= w;
        out ^= splitmix64(&mut state);
        state = out;
    }
    out
}

/// Infinite, deterministic sequence of N(0, 1) variates for one path.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(key: StreamKey) -> Self {
        let mut state = key.master_seed;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(key.path_index);
        Self { rng }
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

impl Iterator for NormalStream {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        Some(self.next_normal())
    }
}

/// Convenience constructor for [`NormalStream`].
pub fn normal_stream(key: StreamKey) -> NormalStream {
    NormalStream::new(key)
}
