//! Reproducible substream derivation.
//!
//! Every random draw in the crate comes from a ChaCha8 stream derived from
//! `(master_seed, id path)`, where the id path identifies the grid point,
//! the shard, and the noise source. Substreams are statistically independent
//! and stable across versions, so serial and parallel runs produce identical
//! results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Noise-source tag, the last component of a substream id path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Symbols,
    Phase,
    Noise,
    Optimizer,
}

impl Source {
    fn id(self) -> u64 {
        match self {
            Source::Symbols => 1,
            Source::Phase => 2,
            Source::Noise => 3,
            Source::Optimizer => 4,
        }
    }
}

// SplitMix64 finalizer; full-avalanche mixing of each id into the state.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn seed_bytes(master: u64, ids: &[u64]) -> [u8; 32] {
    let mut state = mix(master ^ 0x9e37_79b9_7f4a_7c15);
    for &id in ids {
        state = mix(state ^ mix(id.wrapping_add(0x632b_e593_86d1_b71d)));
    }
    let mut seed = [0u8; 32];
    let mut x = state;
    for chunk in seed.chunks_exact_mut(8) {
        x = mix(x.wrapping_add(0x9e37_79b9_7f4a_7c15));
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    seed
}

/// A ChaCha8 stream for `(master_seed, point_id, shard_id, source)`.
pub fn substream(master: u64, point_id: u64, shard_id: u64, source: Source) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(seed_bytes(master, &[point_id, shard_id, source.id()]))
}

/// A ChaCha8 stream for an arbitrary id path under `master_seed`.
pub fn substream_path(master: u64, ids: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(seed_bytes(master, ids))
}
