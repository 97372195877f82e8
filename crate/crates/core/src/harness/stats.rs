use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn excludes_zero(self) -> bool {
        self.lo > 0.0 || self.hi < 0.0
    }

    pub fn contains(self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn resample_mean(xs: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let n = xs.len();
    (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64
}

/// Percentile interval with `alpha / 2` in each tail.
fn percentile(mut draws: Vec<f64>, alpha: f64) -> Interval {
    draws.sort_by(f64::total_cmp);
    let n = draws.len();
    let at = |q: f64| draws[((q * n as f64).floor() as usize).min(n - 1)];
    Interval { lo: at(alpha / 2.0), hi: at(1.0 - alpha / 2.0) }
}

/// 95% percentile bootstrap interval of the mean.
pub fn bootstrap_mean_ci(xs: &[f64], resamples: usize, seed: u64) -> Interval {
    if xs.is_empty() {
        return Interval { lo: 0.0, hi: 0.0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (0..resamples.max(1)).map(|_| resample_mean(xs, &mut rng)).collect();
    percentile(draws, 0.05)
}

/// Observed mean(a) - mean(b) and its bootstrap interval, resampling the two
/// groups independently.
pub fn bootstrap_mean_diff(a: &[f64], b: &[f64], resamples: usize, seed: u64, alpha: f64) -> (f64, Interval) {
    let d = mean(a) - mean(b);
    if a.is_empty() || b.is_empty() {
        return (d, Interval { lo: d, hi: d });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (0..resamples.max(1)).map(|_| resample_mean(a, &mut rng) - resample_mean(b, &mut rng)).collect();
    (d, percentile(draws, alpha))
}

/// Two-proportion version of [`bootstrap_mean_diff`] over 0/1 (or 0/100) outcomes.
pub fn bootstrap_proportion_diff(a: &[f64], b: &[f64], resamples: usize, seed: u64, alpha: f64) -> (f64, Interval) {
    bootstrap_mean_diff(a, b, resamples, seed, alpha)
}
