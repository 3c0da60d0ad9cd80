//! Splittable random streams.
//!
//! A handle is a master seed plus an index path. The generator for a handle is
//! keyed by hashing both, so stream `[g, r, m]` is the same whether it is
//! reached sequentially or from a worker thread, and sibling paths never
//! share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngHandle {
    pub master_seed: u64,
    pub stream_path: Vec<u64>,
}

impl RngHandle {
    pub fn new(master_seed: u64) -> Self {
        RngHandle { master_seed, stream_path: Vec::new() }
    }

    /// Appends `indices` to the stream path.
    pub fn derive(&self, indices: &[u64]) -> Self {
        let mut stream_path = self.stream_path.clone();
        stream_path.extend_from_slice(indices);
        RngHandle { master_seed: self.master_seed, stream_path }
    }

    pub fn child(&self, index: u64) -> Self {
        self.derive(&[index])
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(b"maxway-stream/v1");
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update((self.stream_path.len() as u64).to_le_bytes());
        for idx in &self.stream_path {
            hasher.update(idx.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(seed)
    }
}

/// Free-function form of [`RngHandle::derive`].
pub fn derive_stream(rng: &RngHandle, indices: &[u64]) -> RngHandle {
    rng.derive(indices)
}
