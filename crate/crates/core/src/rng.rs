//! Seeded randomness. Every stochastic step in the crate draws from a
//! [`SeededRng`], so a fixed seed and a fixed call sequence reproduce a run
//! bit for bit.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream; the parent advances by one draw.
    pub fn fork(&mut self) -> SeededRng {
        SeededRng::new(self.inner.random())
    }

    pub fn gaussian<T: Scalar>(&mut self) -> T {
        let v: f64 = StandardNormal.sample(&mut self.inner);
        T::lit(v)
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform<T: Scalar>(&mut self) -> T {
        T::lit(self.inner.random::<f64>())
    }

    pub fn uniform_range<T: Scalar>(&mut self, lo: T, hi: T) -> T {
        lo + (hi - lo) * self.uniform::<T>()
    }

    /// Uniform index in `0..n`. Panics when `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

/// `n x dim` tensor of independent standard normal draws.
pub fn sample_gaussian<T: Scalar>(rng: &mut SeededRng, n: usize, dim: usize) -> Tensor<T> {
    Tensor::from_fn(n, dim, |_, _| rng.gaussian())
}
