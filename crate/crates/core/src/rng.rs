//! Counter-based random streams.
//!
//! A stream is identified by `(master_seed, stream_index)`. The pair is pushed
//! through the SplitMix64 finalizer to key a ChaCha8 generator, so the sample
//! sequence of a stream never depends on which thread consumes it or on how
//! many other streams exist. Parallel Monte Carlo loops hand one substream to
//! each fixed-size chunk of trials and reduce chunk results in index order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// Trials handled by a single substream in [`chunked_trials`].
pub const TRIAL_CHUNK: usize = 4096;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// Child stream `i`. Distinct `(self, i)` pairs give distinct streams.
    pub fn substream(&self, i: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_index: mix64(self.stream_index ^ mix64(i.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut state = mix64(self.master_seed) ^ self.stream_index.rotate_left(17);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = mix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

/// Runs `trials` independent trials in chunks of [`TRIAL_CHUNK`], chunk `c`
/// drawing from `stream.substream(c)`. `init` creates a per-chunk accumulator,
/// `trial` folds one trial into it, and the chunk accumulators are returned in
/// chunk order, so any order-sensitive reduction is thread-count independent.
pub fn chunked_trials<A, I, F>(stream: RngStream, trials: usize, init: I, trial: F) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut StreamRng, usize, &mut A) + Sync,
{
    let chunks = trials.div_ceil(TRIAL_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.substream(c as u64).rng();
            let mut acc = init();
            let start = c * TRIAL_CHUNK;
            let end = (start + TRIAL_CHUNK).min(trials);
            for t in start..end {
                trial(&mut rng, t, &mut acc);
            }
            acc
        })
        .collect()
}
