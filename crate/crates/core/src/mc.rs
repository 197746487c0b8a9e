//! Seedable, thread-count independent Monte Carlo engine.
//!
//! Samples are split into fixed-size chunks. Chunk `c` draws from
//! `ChaCha12Rng::seed_from_u64(seed)` on stream `c`, so every sample owns a
//! fixed position in a fixed stream whatever the number of workers. Chunk
//! statistics are merged in chunk order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CHUNK: usize = 4096;

/// Mean and second central moment, mergeable (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.mean += d * w;
        self.m2 += other.m2 + d * d * self.n as f64 * w;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Mean with standard error and the reproducibility token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
}

impl Estimate {
    pub fn from_stats(s: &RunningStats, seed: u64) -> Self {
        Self { value: s.mean, stderr: s.stderr(), n: s.n, seed }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK))
        .map(|c| (c, CHUNK.min(n - c * CHUNK)))
        .collect()
}

/// Run `f(z, out)` for `n` standard normal vectors `z` of length `z_dim` and
/// return running statistics of each of the `outputs` values written to `out`.
pub fn estimate<F>(n: usize, seed: u64, z_dim: usize, outputs: usize, f: F) -> Result<Vec<RunningStats>>
where
    F: Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
{
    let per_chunk: Vec<Result<Vec<RunningStats>>> = chunk_ranges(n)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            let mut z = vec![0.0; z_dim];
            let mut out = vec![0.0; outputs];
            let mut stats = vec![RunningStats::default(); outputs];
            for _ in 0..len {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                f(&z, &mut out)?;
                for (s, &v) in stats.iter_mut().zip(&out) {
                    s.push(v);
                }
            }
            Ok(stats)
        })
        .collect();
    let mut total = vec![RunningStats::default(); outputs];
    for chunk in per_chunk {
        for (t, s) in total.iter_mut().zip(chunk?) {
            t.merge(&s);
        }
    }
    Ok(total)
}

/// Map each of `n` standard normal vectors through `f`, preserving sample order.
pub fn map_samples<T, F>(n: usize, seed: u64, z_dim: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[f64]) -> Result<T> + Sync,
{
    let per_chunk: Vec<Result<Vec<T>>> = chunk_ranges(n)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = chunk_rng(seed, c);
            let mut z = vec![0.0; z_dim];
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                out.push(f(&z)?);
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(n);
    for chunk in per_chunk {
        all.extend(chunk?);
    }
    Ok(all)
}

/// Independent seed for sub-experiment `index` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
