//! Monte Carlo plumbing: configuration, seeded RNG streams and Poisson weights.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_REALIZATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    /// Sample budget. Direct estimators draw this many realizations; the
    /// stratified profiles spend it per stratum as user-samples.
    pub realizations: usize,
    pub seed: u64,
    /// Explicit cap on a sampled Poisson count; `None` uses `mean + 10·sqrt(mean) + 10`.
    pub poisson_truncation: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { realizations: DEFAULT_REALIZATIONS, seed: 0x4d32_4d00, poisson_truncation: None }
    }
}

impl McConfig {
    pub fn new(realizations: usize, seed: u64) -> Result<Self> {
        let cfg = McConfig { realizations, seed, poisson_truncation: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations < 1_000 {
            return Err(Error::invalid("realizations", format!("{} < 1000", self.realizations)));
        }
        Ok(())
    }

    pub fn truncation(&self, mean: f64) -> usize {
        self.poisson_truncation
            .unwrap_or_else(|| (mean + 10.0 * mean.sqrt() + 10.0).ceil() as usize)
    }

    /// Same config with a different seed, derived deterministically.
    pub fn with_seed(&self, seed: u64) -> Self {
        McConfig { seed, ..*self }
    }
}

/// Independent, reproducible stream `stream` of the generator seeded by `seed`.
///
/// Sample `i` of any estimator always uses stream `i`, so results do not
/// depend on how the work is split across threads.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes two seeds into one (splitmix64 finalizer).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Poisson pmf restricted to a window around the mean, renormalized.
#[derive(Debug, Clone)]
pub struct PoissonWeights {
    pub first: usize,
    pub weights: Vec<f64>,
}

impl PoissonWeights {
    /// Window `[mean - 10·sqrt(mean) - 10, cap]` with `cap` from [`McConfig::truncation`]
    /// when given, otherwise `mean + 10·sqrt(mean) + 10`.
    pub fn new(mean: f64, cap: Option<usize>) -> Self {
        assert!(mean >= 0.0 && mean.is_finite(), "poisson mean must be finite and non-negative");
        if mean == 0.0 {
            return PoissonWeights { first: 0, weights: vec![1.0] };
        }
        let spread = 10.0 * mean.sqrt() + 10.0;
        let lo = (mean - spread).floor().max(0.0) as usize;
        let hi = cap.unwrap_or((mean + spread).ceil() as usize).max(lo);
        let ln_mean = mean.ln();
        let mode = (mean.floor() as usize).clamp(lo, hi);
        let ln_at_mode = mode as f64 * ln_mean - mean - ln_factorial(mode);
        let mut ln_w = vec![0.0; hi - lo + 1];
        ln_w[mode - lo] = ln_at_mode;
        for k in (mode + 1)..=hi {
            ln_w[k - lo] = ln_w[k - 1 - lo] + ln_mean - (k as f64).ln();
        }
        for k in (lo..mode).rev() {
            ln_w[k - lo] = ln_w[k + 1 - lo] - ln_mean + ((k + 1) as f64).ln();
        }
        let mut weights: Vec<f64> = ln_w.iter().map(|l| l.exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        PoissonWeights { first: lo, weights }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().enumerate().map(move |(i, &w)| (self.first + i, w))
    }

    /// Inverse-CDF draw from a single uniform. Monotone in `u` and, for a
    /// fixed `u`, non-decreasing in the mean (common random numbers).
    pub fn quantile(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, w) in self.iter() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.first + self.weights.len() - 1
    }
}

fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n < 256 {
        return (2..=n).map(|k| (k as f64).ln()).sum();
    }
    // Stirling series; relative error far below 1e-12 for n >= 256.
    let x = n as f64;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x * x * x)
}

/// An outage probability and its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageEstimate {
    pub epsilon: f64,
    pub stderr: f64,
}

/// `Σ (w_n n)² / mean²`: variance inflation of a Poisson mixture of strata
/// that each hold the same number of user-trials.
pub fn poisson_spread(mean: f64, cap: Option<usize>) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let w = PoissonWeights::new(mean, cap);
    w.iter().map(|(n, p)| (p * n as f64).powi(2)).sum::<f64>() / (mean * mean)
}

/// Standard error of a binomial proportion estimate.
pub fn binomial_stderr(p: f64, trials: f64) -> f64 {
    if trials <= 0.0 {
        return f64::INFINITY;
    }
    (p * (1.0 - p) / trials).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_weights_match_direct_pmf() {
        let w = PoissonWeights::new(3.5, None);
        let mut p = (-3.5f64).exp();
        for k in 0..20 {
            let got = w.iter().find(|&(j, _)| j == k).map(|(_, v)| v).unwrap();
            assert!((got - p).abs() < 1e-12, "k={k}");
            p *= 3.5 / (k + 1) as f64;
        }
    }

    #[test]
    fn poisson_weights_large_mean_are_normalized_and_centered() {
        let w = PoissonWeights::new(1000.0, None);
        let total: f64 = w.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mean: f64 = w.iter().map(|(k, p)| k as f64 * p).sum();
        assert!((mean - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn quantile_is_monotone_in_mean() {
        for &u in &[0.01, 0.3, 0.77, 0.999] {
            let mut last = 0;
            for m in [0.5, 1.0, 2.0, 7.0, 30.0] {
                let k = PoissonWeights::new(m, None).quantile(u);
                assert!(k >= last);
                last = k;
            }
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        use rand::Rng;
        let a: u64 = stream_rng(7, 3).random();
        let b: u64 = stream_rng(7, 3).random();
        let c: u64 = stream_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn realizations_floor() {
        assert!(McConfig::new(999, 1).is_err());
        assert!(McConfig::new(1000, 1).is_ok());
    }
}
