//! Seeding conventions.
//!
//! Every Monte Carlo unit (one walk, one chain, one sampled tree) owns a
//! ChaCha stream addressed by `(seed, index)`. Results therefore do not depend
//! on how work is split across threads, and reductions merge per-chunk
//! partials in chunk order.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// RNG for unit `index` of the experiment seeded with `seed`.
pub fn stream_rng(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stable sub-seed for a named task, e.g. `task_seed(master, "e1/tail")`.
pub fn task_seed(master: u64, path: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(path.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Fixed-size chunking used by all parallel reductions.
pub const CHUNK: usize = 2048;

/// Runs `f` over `0..n` split into fixed chunks and returns per-chunk results
/// in chunk order.
pub fn chunked<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect()
}

/// Parallel map over `0..n` preserving index order.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}
