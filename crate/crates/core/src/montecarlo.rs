//! Chunked, reproducible Monte Carlo averaging.
//!
//! A run of `samples` draws is split into chunks of [`CHUNK_SIZE`]. Chunk `c`
//! draws from `stream(seed, MonteCarloChunk, c)` and produces a [`Moments`]
//! summary; summaries are merged in chunk order. The result is therefore
//! bit-identical for any number of worker threads.

use rayon::prelude::*;

use crate::error::Result;
use crate::rng::{self, Purpose, StreamRng};

/// Draws per chunk.
pub const CHUNK_SIZE: usize = 2048;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Count, mean and centred second moment of a batch of values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    /// `Σ (x - mean)²`.
    pub m2: f64,
}

impl Moments {
    /// Two-pass summary of a slice, both passes compensated.
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
        let m2 = values.iter().map(|x| (x - mean) * (x - mean)).collect::<CompensatedSum>().value();
        Self { count: values.len() as u64, mean, m2 }
    }

    /// Pairwise combination of two summaries.
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        Moments {
            count: self.count + other.count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count as f64 - 1.0)
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Sizes of the chunks covering `samples` draws.
pub fn chunk_sizes(samples: usize) -> Vec<usize> {
    let full = samples / CHUNK_SIZE;
    let mut sizes = vec![CHUNK_SIZE; full];
    if samples % CHUNK_SIZE != 0 {
        sizes.push(samples % CHUNK_SIZE);
    }
    sizes
}

/// Runs `samples` draws through `chunk_fn`, which receives the chunk stream
/// and chunk size and returns one value vector per observable (all of the
/// same length). Returns the merged moments per observable.
pub fn run_chunked<F>(samples: usize, seed: u64, observables: usize, chunk_fn: F) -> Result<Vec<Moments>>
where
    F: Fn(&mut StreamRng, usize) -> Result<Vec<Vec<f64>>> + Sync,
{
    let sizes = chunk_sizes(samples);
    let per_chunk: Vec<Result<Vec<Moments>>> = sizes
        .par_iter()
        .enumerate()
        .map(|(c, &size)| {
            let mut rng = rng::stream(seed, Purpose::MonteCarloChunk, c as u64);
            let values = chunk_fn(&mut rng, size)?;
            debug_assert_eq!(values.len(), observables);
            Ok(values.iter().map(|v| Moments::from_values(v)).collect())
        })
        .collect();
    let mut total = vec![Moments::default(); observables];
    for chunk in per_chunk {
        for (acc, m) in total.iter_mut().zip(chunk?) {
            *acc = acc.merge(&m);
        }
    }
    Ok(total)
}
