//! Deterministic, splittable random streams.
//!
//! A stream is identified by a root seed and a path of integer labels. The
//! generator state of a stream is a pure function of `(seed, path)`, so
//! `derive` never depends on how many values the parent has already produced.
//! Parallel work keyed by stable labels therefore yields the same numbers
//! regardless of scheduling.

use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive fold of a label into a path key.
fn mix_label(key: u64, label: u64) -> u64 {
    splitmix64(key.rotate_left(17) ^ splitmix64(label ^ 0xA076_1D64_78BD_642F))
}

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
    key: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::from_parts(seed, Vec::new(), splitmix64(seed))
    }

    fn from_parts(seed: u64, path: Vec<u64>, key: u64) -> Self {
        let mut bytes = [0u8; 32];
        let mut state = key;
        for chunk in bytes.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self {
            seed,
            path,
            key,
            rng: ChaCha12Rng::from_seed(bytes),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child stream labelled `label`. Pure in `(self.seed, self.path, label)`.
    pub fn derive(&self, label: u64) -> RngStream {
        let mut path = self.path.clone();
        path.push(label);
        Self::from_parts(self.seed, path, mix_label(self.key, label))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn standard_normal(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    /// `n` draws of `(b - p) / m` with `b ~ Bernoulli(p)`.
    pub fn bernoulli_standardized(&mut self, n: usize, p: f64, m: f64) -> Result<Vec<f64>> {
        let mut out = alloc::vec![0.0; n];
        self.fill_bernoulli_standardized(&mut out, p, m)?;
        Ok(out)
    }

    pub fn fill_bernoulli_standardized(&mut self, out: &mut [f64], p: f64, m: f64) -> Result<()> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("p", "must lie in (0, 1)"));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid("m", "must be positive and finite"));
        }
        let coin = Bernoulli::new(p).map_err(|_| invalid("p", "must lie in (0, 1)"))?;
        let (hi, lo) = ((1.0 - p) / m, -p / m);
        for v in out {
            *v = if coin.sample(&mut self.rng) { hi } else { lo };
        }
        Ok(())
    }

    /// Uniformly random rotation in SO(d).
    ///
    /// QR of a Gaussian matrix with the signs of `R`'s diagonal folded into
    /// `Q` is Haar on O(d); a negative determinant is fixed by negating the
    /// first column.
    pub fn haar_rotation(&mut self, d: usize) -> Result<DMatrix<f64>> {
        if d == 0 {
            return Err(invalid("d", "must be at least 1"));
        }
        let gaussian = DMatrix::from_fn(d, d, |_, _| self.normal());
        let qr = gaussian.qr();
        let r = qr.r();
        let mut q = qr.q();
        for j in 0..d {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        Ok(q)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Mean, unbiased variance and kurtosis (fourth standardized moment) of a sample.
pub fn sample_moments(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let dx2 = (x - mean).powi(2);
        m2 += dx2;
        m4 += dx2 * dx2;
    }
    let pop_var = m2 / n;
    (mean, m2 / (n - 1.0), (m4 / n) / (pop_var * pop_var))
}
