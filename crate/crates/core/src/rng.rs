//! Deterministic random streams.
//!
//! Every consumer of randomness asks a [`StreamFactory`] for a stream keyed by
//! a list of labels (method, replicate, purpose, ...). The key is hashed
//! together with the master seed, so streams are independent of each other and
//! of the order in which they are requested. Adding a method never perturbs the
//! draws of another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    master: u64,
}

impl StreamFactory {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream for a label path plus a numeric counter.
    pub fn stream(&self, labels: &[&str], counter: u64) -> StreamRng {
        let mut hasher = Sha256::new();
        hasher.update(b"bam-stream-v1");
        hasher.update(self.master.to_le_bytes());
        for label in labels {
            hasher.update((label.len() as u64).to_le_bytes());
            hasher.update(label.as_bytes());
        }
        hasher.update(counter.to_le_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(seed)
    }

    /// A child factory whose master seed is derived from this one.
    pub fn child(&self, labels: &[&str], counter: u64) -> StreamFactory {
        use rand::RngCore;
        StreamFactory::new(self.stream(labels, counter).next_u64())
    }
}
