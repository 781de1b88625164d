//! Summary statistics and percentile bootstrap intervals.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Seed of the resampling stream; fixed so reports are reproducible.
pub const BOOTSTRAP_SEED: u64 = 0xB007_5742;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1); zero for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn standard_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    sd(xs) / (xs.len() as f64).sqrt()
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Means of `resamples` bootstrap resamples of `xs`, sorted.
pub fn bootstrap_means(xs: &[f64], resamples: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    means
}

/// Two-sided percentile interval for the mean at confidence `level`.
///
/// Widened if necessary so it always contains the sample mean.
pub fn bootstrap_ci(xs: &[f64], resamples: usize, level: f64, seed: u64) -> Interval {
    let m = mean(xs);
    if xs.len() < 2 || resamples == 0 {
        return Interval { lo: m, hi: m };
    }
    let means = bootstrap_means(xs, resamples, seed);
    let tail = (1.0 - level) / 2.0;
    Interval {
        lo: quantile(&means, tail).min(m),
        hi: quantile(&means, 1.0 - tail).max(m),
    }
}

/// One-sided lower confidence bound for the mean at level `1 − alpha`.
pub fn bootstrap_lower_bound(xs: &[f64], resamples: usize, alpha: f64, seed: u64) -> f64 {
    let m = mean(xs);
    if xs.len() < 2 || resamples == 0 {
        return m;
    }
    quantile(&bootstrap_means(xs, resamples, seed), alpha).min(m)
}
