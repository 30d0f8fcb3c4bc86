//! Seeded sampling.
//!
//! The generator is ChaCha8 keyed by a 64-bit seed; Gaussians use the ziggurat
//! sampler from `rand_distr`. Streams are reproducible within a build, not
//! across implementations.

use alloc::vec::Vec;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream `stream` under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.gaussian();
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn sign(&mut self) -> i8 {
        if self.inner.random::<bool>() {
            1
        } else {
            -1
        }
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Uniform point on the unit sphere `S^{d-1}`.
    pub fn unit_vector(&mut self, d: usize) -> Result<Vec<f64>> {
        let mut v = sample_gaussian_vec(self, d)?;
        loop {
            let n = crate::linalg::norm2(&v);
            if n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
                return Ok(v);
            }
            self.fill_gaussian(&mut v);
        }
    }

    /// Uniform point in the closed ball of radius `r` around the origin.
    pub fn in_ball(&mut self, d: usize, r: f64) -> Result<Vec<f64>> {
        let mut v = self.unit_vector(d)?;
        let rho = r * libm::pow(self.uniform(), 1.0 / d as f64);
        v.iter_mut().for_each(|x| *x *= rho);
        Ok(v)
    }
}

/// `d` i.i.d. standard normal draws.
pub fn sample_gaussian_vec(rng: &mut Rng, d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::InvalidDimension { what: "gaussian vector", value: d });
    }
    Ok((0..d).map(|_| rng.gaussian()).collect())
}

/// `m` i.i.d. uniform signs in `{-1, +1}`.
pub fn sample_sign_vec(rng: &mut Rng, m: usize) -> Result<Vec<i8>> {
    if m == 0 {
        return Err(Error::InvalidDimension { what: "sign vector", value: m });
    }
    Ok((0..m).map(|_| rng.sign()).collect())
}
