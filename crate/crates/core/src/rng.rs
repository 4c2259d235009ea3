//! Seeded, stream-addressable randomness.
//!
//! Every random draw in the crate goes through a [`Sampler`]. A sampler is a
//! ChaCha8 stream selected by `(seed, stream)`, so independent batches can be
//! generated in any order (or in parallel) and still reproduce bit for bit.

use alloc::vec::Vec;

#[cfg(not(any(feature = "std", test)))]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Matrix, Vector};

/// Number of samples drawn from one stream before the next stream is used.
pub const BATCH: usize = 256;

#[derive(Clone, Debug)]
pub struct Sampler {
    rng: ChaCha8Rng,
    seed: u64,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// `10^(-decades * U)`, i.e. a log-uniform factor in `(10^-decades, 1]`.
    pub fn log_scale(&mut self, decades: f64) -> f64 {
        10.0_f64.powf(-decades * self.uniform())
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_vector(&mut self, n: usize) -> Vector {
        Vector::from_fn(n, |_, _| self.normal())
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.normal())
    }

    pub fn unit_vector(&mut self, n: usize) -> Vector {
        loop {
            let v = self.normal_vector(n);
            let norm = v.norm();
            if norm > 1e-12 {
                return v / norm;
            }
        }
    }

    /// Uniform in the closed Euclidean ball of the given radius.
    pub fn in_ball(&mut self, n: usize, radius: f64) -> Vector {
        let dir = self.unit_vector(n);
        let r = radius * self.uniform().powf(1.0 / n as f64);
        dir * r
    }

    pub fn in_box(&mut self, n: usize, half_width: f64) -> Vector {
        Vector::from_fn(n, |_, _| self.uniform_in(-half_width, half_width))
    }
}

/// Evaluates `f` on `count` samples, drawing sample `i` from stream
/// `i / BATCH`. The result for a given `i` does not depend on `count`, so a
/// run with more samples always extends a run with fewer.
pub fn batched<T, F>(seed: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Sampler, usize) -> T + Sync + Send,
{
    let batches = count.div_ceil(BATCH);
    let run = |batch: usize| -> Vec<T> {
        let mut sampler = Sampler::with_stream(seed, batch as u64);
        let start = batch * BATCH;
        let end = (start + BATCH).min(count);
        (start..end).map(|i| f(&mut sampler, i)).collect()
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let parts: Vec<Vec<T>> = (0..batches).into_par_iter().map(run).collect();
        parts.into_iter().flatten().collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..batches).flat_map(run).collect()
    }
}

/// Applies `f` to consecutive index ranges of length `chunk` covering
/// `0..count` and returns the results in range order, so reductions over
/// them do not depend on scheduling.
pub fn ordered_chunks<T, F>(count: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(core::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let run = |c: usize| f(c * chunk..((c + 1) * chunk).min(count));
    let chunks = count.div_ceil(chunk);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..chunks).map(run).collect()
    }
}

const PRIMES: [u32; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131,
];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut acc = 0.0;
    while index > 0 {
        acc += (index % base) as f64 * factor;
        index /= base;
        factor *= inv;
    }
    acc
}

/// Halton point `index` in `[0, 1)^dim` (dim <= 32).
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton supports at most 32 dimensions");
    (0..dim)
        .map(|d| radical_inverse(index + 1, PRIMES[d] as u64))
        .collect()
}

/// Maps a point of the cube `[-1, 1]^n` onto the unit ball by rescaling
/// along rays (sup-norm to Euclidean norm).
pub fn cube_to_ball(v: &[f64]) -> Vector {
    let sup = v.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let euc = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut out = Vector::from_column_slice(v);
    if euc > 0.0 {
        out *= sup / euc;
    }
    out
}

/// Halton point `index` mapped into the closed unit ball.
pub fn halton_ball(index: u64, dim: usize) -> Vector {
    let h: Vec<f64> = halton(index, dim).iter().map(|u| 2.0 * u - 1.0).collect();
    cube_to_ball(&h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = Sampler::with_stream(7, 3);
        let mut b = Sampler::with_stream(7, 3);
        let mut c = Sampler::with_stream(7, 4);
        let xa: Vec<f64> = (0..5).map(|_| a.uniform()).collect();
        let xb: Vec<f64> = (0..5).map(|_| b.uniform()).collect();
        let xc: Vec<f64> = (0..5).map(|_| c.uniform()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn batched_prefix_property() {
        let small = batched(11, 300, |s, _| s.uniform());
        let large = batched(11, 900, |s, _| s.uniform());
        assert_eq!(&large[..300], &small[..]);
    }

    #[test]
    fn halton_first_points() {
        assert_eq!(halton(0, 2), alloc::vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(1, 1), alloc::vec![0.25]);
    }

    #[test]
    fn cube_to_ball_stays_inside() {
        for i in 0..500 {
            let h: Vec<f64> = halton(i, 3).iter().map(|u| 2.0 * u - 1.0).collect();
            assert!(cube_to_ball(&h).norm() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn in_ball_radius() {
        let mut s = Sampler::new(1);
        for _ in 0..1000 {
            assert!(s.in_ball(4, 0.3).norm() <= 0.3 + 1e-15);
        }
    }
}
