//! Keyed random-number sub-streams.
//!
//! Every consumer of randomness (a chain, a level-0 sample block, a seed
//! shuffle, an inner run) gets its own ChaCha stream derived from the master
//! seed and a path of labels. Results therefore do not depend on how work is
//! scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random stream type handed to samplers.
pub type Stream = ChaCha8Rng;

const CHILD_BIT: u64 = 1 << 63;

/// A node in the tree of sub-streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamTree {
    key: [u8; 32],
}

impl StreamTree {
    pub fn new(master_seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master_seed.to_le_bytes());
        key[8..16].copy_from_slice(b"rarebays");
        Self { key }
    }

    /// Derives an independent subtree. Labels share no stream ids with [`Self::stream`].
    pub fn child(&self, label: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(CHILD_BIT | (label & !CHILD_BIT));
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        Self { key }
    }

    /// Convenience for nested labels.
    pub fn path(&self, labels: &[u64]) -> Self {
        labels.iter().fold(*self, |t, &l| t.child(l))
    }

    /// Leaf stream `index` of this node. `index` must be below 2^63.
    pub fn stream(&self, index: u64) -> Stream {
        debug_assert!(index < CHILD_BIT);
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}

/// Fixed labels for the top-level namespaces.
pub mod label {
    pub const LEVEL_ZERO: u64 = 0;
    pub const CHAINS: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const INNER: u64 = 3;
    pub const ORACLE: u64 = 4;
}
