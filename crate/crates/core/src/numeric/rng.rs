use serde::{Deserialize, Serialize};

use super::Tensor;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_TAG: u64 = 0x5851_F42D_4C95_7F2D;
const DERIVE_TAG: u64 = 0xD601_2715_AA01_11C5;

/// SplitMix64 finalizer; a strong 64-bit mixing function.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based splittable random stream.
///
/// A stream is identified by a key derived from the master seed and the
/// sequence of derivation labels; the n-th output is a pure function of
/// (key, n). Derived streams with distinct labels are independent for the
/// statistics used here, and child derivation never advances the parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed ^ SEED_TAG),
            counter: 0,
        }
    }

    /// Derives a child stream. Deterministic in (seed, path, label) and
    /// sensitive to label order along the path.
    pub fn derive(&self, label: u64) -> Self {
        Self {
            key: mix64(self.key.wrapping_add(mix64(label ^ DERIVE_TAG)).rotate_left(17) ^ GOLDEN),
            counter: 0,
        }
    }

    /// Derives a child stream from a string label (FNV-1a folded).
    pub fn derive_str(&self, label: &str) -> Self {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in label.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.derive(h)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform double in [0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in [lo, hi).
    #[inline]
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n).
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift; bias is negligible for the small n used here.
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Standard normal pair via Box-Muller.
    #[inline]
    pub fn next_gaussian_pair(&mut self) -> (f64, f64) {
        // u1 in (0, 1] so the log stays finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Single standard normal draw (discards the pair's second member).
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        self.next_gaussian_pair().0
    }

    /// Tensor of i.i.d. standard normal entries.
    pub fn sample_gaussian(&mut self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        while data.len() + 2 <= n {
            let (a, b) = self.next_gaussian_pair();
            data.push(a);
            data.push(b);
        }
        if data.len() < n {
            data.push(self.next_gaussian_pair().0);
        }
        Tensor::new(shape.to_vec(), data).expect("shape/product invariant")
    }

    /// Fisher-Yates shuffle of indices 0..n.
    pub fn shuffled_indices(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.next_below(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}
