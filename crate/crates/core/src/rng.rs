//! Seeded, stream-splittable Gaussian noise.
//!
//! A master seed and a text label are hashed into a ChaCha20 key; each
//! replication index selects its own ChaCha stream. A draw therefore depends
//! only on `(seed, label, index)`, never on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// Label used by [`sample_noise`].
pub const NOISE_LABEL: &str = "noise";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    key: [u8; 32],
}

impl SeedStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"cp-oracle/v1\0");
        h.update(label.as_bytes());
        h.update([0u8]);
        h.update(seed.to_le_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Self { key }
    }

    /// Independent generator for replication `index`.
    pub fn rng(&self, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }

    pub fn standard_normals(&self, index: u64, n: usize) -> Vec<f64> {
        let mut rng = self.rng(index);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// `N(0, σ² I_n)` draw for replication `index`.
    pub fn noise(&self, index: u64, n: usize, sigma2: f64) -> Vec<f64> {
        let sigma = sigma2.sqrt();
        let mut z = self.standard_normals(index, n);
        z.iter_mut().for_each(|v| *v *= sigma);
        z
    }
}

/// Sub-seed for a labelled task, e.g. one of several experiments sharing a
/// master seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let key = SeedStream::new(seed, label).key;
    u64::from_le_bytes(key[..8].try_into().expect("32-byte key"))
}

/// `ξ ~ N(0, σ² I_n)`, fully determined by `(seed, replication_index)`.
pub fn sample_noise(n: usize, sigma2: f64, seed: u64, replication_index: u64) -> Vec<f64> {
    SeedStream::new(seed, NOISE_LABEL).noise(replication_index, n, sigma2)
}
