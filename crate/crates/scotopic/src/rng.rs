//! Deterministic seed derivation for parallel substreams.
//!
//! Every stochastic component of the crate draws from a [`ChaCha8Rng`] whose
//! seed is derived from a single master seed plus a path of integer indices
//! (for example `[data_point]` in the simulator, or
//! `[multiplex, chain]` in the sampler). Work items can therefore run in any
//! order, on any number of threads, and still reproduce bit-identical
//! results: the stream only depends on the path, never on scheduling.
//!
//! Derivation folds the path into the master seed with SplitMix64 steps, the
//! same finalizer used by `SeedableRng::seed_from_u64` to spread entropy
//! across the full state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 scramble step.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a master seed and a path of indices into a single stream seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut acc = splitmix64(master);
    for &p in path {
        acc = splitmix64(acc ^ splitmix64(p.wrapping_add(0x517c_c1b7_2722_0a95)));
    }
    acc
}

/// Constructs the generator for the substream identified by `path`.
pub fn stream_rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
