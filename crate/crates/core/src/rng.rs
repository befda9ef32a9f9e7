//! Seedable, labeled random streams.
//!
//! Every stochastic decision in the system draws from a [`RandomSource`]
//! created with a run seed and a short purpose label ("init", "bernoulli",
//! "stream-order", ...). The generator is ChaCha20 keyed by the seed with
//! the ChaCha stream number set to an FNV-1a hash of the label, so distinct
//! labels give independent sequences and identical (seed, label) pairs
//! replay the exact same draws, byte for byte.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Deterministic random stream for one purpose.
///
/// Single-consumer: one logical owner per (seed, label) pair.
#[derive(Debug, Clone)]
pub struct RandomSource {
    rng: ChaCha20Rng,
    seed: u64,
    label: String,
}

impl RandomSource {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a_64(label.as_bytes()));
        RandomSource {
            rng,
            seed,
            label: label.to_string(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Bernoulli draw; `p >= 1` always succeeds, `p <= 0` never does.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Uniform index in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index over empty range");
        self.rng.gen_range(0..n)
    }

    /// Uniform in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        xs.shuffle(&mut self.rng);
    }

    /// Standard normal via Box–Muller (two uniform draws per call).
    pub fn standard_normal(&mut self) -> f64 {
        // Guard u1 away from 0 so the log stays finite.
        let u1 = (1.0 - self.next_f64()).max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// k distinct indices from [0, n), uniform without replacement,
    /// by partial Fisher–Yates. Requires k <= n.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "sample_indices: k > n");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
