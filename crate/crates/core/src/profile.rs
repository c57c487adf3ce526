//! Stratified, rate-independent Monte Carlo profiles.
//!
//! Each access strategy reduces one realization with `n` users to a list of
//! rate thresholds such that the number of users served at common rate `R`
//! is `#{t : t >= R}`. Conditioning on `n` and pooling the thresholds of many
//! realizations gives `E[served | n](R)` for every `R` at once; mixing the
//! strata with Poisson weights then yields the expectation under Poisson
//! arrivals for any mean. All rates and loads therefore share the same
//! samples (common random numbers).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::channel_model::GainModel;
use crate::mc::{mix_seed, stream_rng, McConfig, PoissonWeights};

/// Pooled thresholds kept per stratum; larger pools are subsampled by rank.
const SKETCH_POINTS: usize = 8192;
/// Strata up to this user count are simulated exactly; above it, at
/// geometrically spaced knots with linear interpolation in `n`.
pub const EXACT_STRATA: usize = 256;
const KNOT_RATIO: f64 = 1.02;
const MIN_SAMPLES: usize = 64;

/// Reduces one realization to its staircase of rate thresholds.
pub trait ThresholdRule: Send + Sync {
    /// `gains` are the realization's effective gains in arbitrary order and
    /// may be reordered. Appends one threshold per potentially served user.
    fn thresholds(&self, gains: &mut [f64], out: &mut Vec<f64>);
}

#[derive(Debug)]
struct Stratum {
    samples: usize,
    pooled: usize,
    /// Ascending thresholds at ranks `ranks[i]` of the pooled sort.
    values: Vec<f64>,
    ranks: Vec<usize>,
}

impl Stratum {
    fn empty() -> Self {
        Stratum { samples: 1, pooled: 0, values: Vec::new(), ranks: Vec::new() }
    }

    fn from_pool(mut pool: Vec<f64>, samples: usize) -> Self {
        pool.sort_by(f64::total_cmp);
        let pooled = pool.len();
        if pooled <= SKETCH_POINTS {
            let ranks = (0..pooled).collect();
            return Stratum { samples, pooled, values: pool, ranks };
        }
        let last = pooled - 1;
        let ranks: Vec<usize> =
            (0..SKETCH_POINTS).map(|i| (i as u128 * last as u128 / (SKETCH_POINTS as u128 - 1)) as usize).collect();
        let values = ranks.iter().map(|&r| pool[r]).collect();
        Stratum { samples, pooled, values, ranks }
    }

    /// Number of pooled thresholds strictly below `rate`.
    fn count_below(&self, rate: f64) -> f64 {
        let idx = self.values.partition_point(|&v| v < rate);
        if idx == 0 {
            return 0.0;
        }
        if idx == self.values.len() {
            return self.pooled as f64;
        }
        let (lo_v, hi_v) = (self.values[idx - 1], self.values[idx]);
        let (lo_r, hi_r) = (self.ranks[idx - 1] as f64, self.ranks[idx] as f64);
        if hi_r - lo_r <= 1.0 {
            return hi_r;
        }
        // Interpolate the rank between sketch points.
        let frac = if hi_v > lo_v { ((rate - lo_v) / (hi_v - lo_v)).clamp(0.0, 1.0) } else { 1.0 };
        lo_r + 1.0 + frac * (hi_r - lo_r - 1.0)
    }

    fn mean_served(&self, rate: f64) -> f64 {
        (self.pooled as f64 - self.count_below(rate)) / self.samples as f64
    }
}

/// `E[served | n users](R)` for all `n`, built lazily.
pub struct ThresholdProfile<Q> {
    rule: Q,
    model: GainModel,
    seed: u64,
    user_budget: usize,
    strata: Mutex<HashMap<usize, Arc<OnceLock<Stratum>>>>,
}

impl<Q: ThresholdRule> ThresholdProfile<Q> {
    /// `mc.realizations` is spent per stratum as user-samples.
    pub fn new(rule: Q, model: GainModel, mc: &McConfig) -> Self {
        ThresholdProfile {
            rule,
            model,
            seed: mc.seed,
            user_budget: mc.realizations,
            strata: Mutex::new(HashMap::new()),
        }
    }

    pub fn rule(&self) -> &Q {
        &self.rule
    }

    pub fn gain_model(&self) -> &GainModel {
        &self.model
    }

    fn samples_for(&self, n: usize) -> usize {
        self.user_budget.div_ceil(n.max(1)).max(MIN_SAMPLES)
    }

    fn stratum(&self, n: usize) -> Arc<OnceLock<Stratum>> {
        let cell = {
            let mut map = self.strata.lock().expect("strata lock");
            map.entry(n).or_insert_with(|| Arc::new(OnceLock::new())).clone()
        };
        cell.get_or_init(|| self.build(n));
        cell
    }

    fn build(&self, n: usize) -> Stratum {
        if n == 0 {
            return Stratum::empty();
        }
        let samples = self.samples_for(n);
        let stratum_seed = mix_seed(self.seed, n as u64);
        let pool: Vec<f64> = (0..samples)
            .into_par_iter()
            .fold(
                || (Vec::new(), Vec::with_capacity(n)),
                |(mut out, mut gains): (Vec<f64>, Vec<f64>), s| {
                    let mut rng = stream_rng(stratum_seed, s as u64);
                    gains.clear();
                    gains.extend((0..n).map(|_| self.model.sample_gain(&mut rng)));
                    self.rule.thresholds(&mut gains, &mut out);
                    (out, gains)
                },
            )
            .map(|(out, _)| out)
            .reduce(Vec::new, |mut a, mut b| {
                a.append(&mut b);
                a
            });
        Stratum::from_pool(pool, samples)
    }

    /// `E[served | n](rate)`.
    pub fn mean_served(&self, n: usize, rate: f64) -> f64 {
        if n <= EXACT_STRATA {
            return self.stratum(n).get().expect("built").mean_served(rate);
        }
        let (lo, hi) = knots_around(n);
        let f_lo = self.stratum(lo).get().expect("built").mean_served(rate);
        if hi == lo {
            return f_lo;
        }
        let f_hi = self.stratum(hi).get().expect("built").mean_served(rate);
        f_lo + (f_hi - f_lo) * (n - lo) as f64 / (hi - lo) as f64
    }

    /// `E[served]` when the user count is Poisson with the given mean.
    pub fn poisson_mean_served(&self, mean: f64, rate: f64, cap: Option<usize>) -> f64 {
        poisson_mix(&PoissonWeights::new(mean, cap), |n| self.mean_served(n, rate))
    }

    /// Number of stratum samples and pooled thresholds for `n` users.
    pub fn stratum_size(&self, n: usize) -> (usize, usize) {
        let cell = self.stratum(n);
        let s = cell.get().expect("built");
        (s.samples, s.pooled)
    }
}

/// `Σ_n w_n f(n)` over the non-negligible, non-empty strata.
pub fn poisson_mix(weights: &PoissonWeights, mut f: impl FnMut(usize) -> f64) -> f64 {
    weights.iter().filter(|&(n, w)| n > 0 && w > 1e-15).map(|(n, w)| w * f(n)).sum()
}

fn knots_around(n: usize) -> (usize, usize) {
    let mut lo = EXACT_STRATA;
    loop {
        let hi = ((lo as f64 * KNOT_RATIO).round() as usize).max(lo + 1);
        if hi > n {
            return (lo, hi);
        }
        if hi == n {
            return (n, n);
        }
        lo = hi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Serves every user whose own gain clears `R`: thresholds are the gains.
    struct GainIsThreshold;

    impl ThresholdRule for GainIsThreshold {
        fn thresholds(&self, gains: &mut [f64], out: &mut Vec<f64>) {
            out.extend_from_slice(gains);
        }
    }

    fn unit_exp_model() -> GainModel {
        GainModel::new(3.76, 0.0).with_placement(crate::channel_model::Placement::Pinned(1.0))
    }

    #[test]
    fn stratum_mean_matches_exponential_tail() {
        let p = ThresholdProfile::new(GainIsThreshold, unit_exp_model(), &McConfig::new(200_000, 1).unwrap());
        for n in [1usize, 3, 10] {
            for t in [0.2, 1.0, 2.5] {
                let got = p.mean_served(n, t) / n as f64;
                assert!((got - (-t).exp()).abs() < 0.01, "n={n} t={t} got={got}");
            }
        }
    }

    #[test]
    fn sketch_interpolation_is_close_to_exact() {
        let pool: Vec<f64> = (0..100_000).map(|i| i as f64 / 100_000.0).collect();
        let s = Stratum::from_pool(pool, 1);
        assert_eq!(s.values.len(), SKETCH_POINTS);
        for r in [0.0, 0.123_45, 0.5, 0.999_99] {
            let exact = (r * 100_000.0f64).ceil();
            assert!((s.count_below(r) - exact).abs() <= 13.0, "r={r}: {} vs {exact}", s.count_below(r));
        }
        assert_eq!(s.count_below(2.0), 100_000.0);
    }

    #[test]
    fn poisson_mixing_of_linear_counts_gives_mean() {
        let p = ThresholdProfile::new(GainIsThreshold, unit_exp_model(), &McConfig::new(20_000, 2).unwrap());
        // Every gain is >= 0, so everybody is served at R = 0.
        for mean in [0.5, 4.0, 30.0] {
            assert!((p.poisson_mean_served(mean, 0.0, None) - mean).abs() < 1e-9 * mean.max(1.0));
        }
    }

    #[test]
    fn large_strata_interpolate_between_knots() {
        let p = ThresholdProfile::new(GainIsThreshold, unit_exp_model(), &McConfig::new(50_000, 3).unwrap());
        let n = EXACT_STRATA + 37;
        let (lo, hi) = knots_around(n);
        assert!(lo <= n && n <= hi && lo > EXACT_STRATA - 1);
        let got = p.mean_served(n, 1.0) / n as f64;
        assert!((got - (-1.0f64).exp()).abs() < 0.01);
    }

    #[test]
    fn knots_cover_every_count() {
        for n in (EXACT_STRATA + 1)..5_000 {
            let (lo, hi) = knots_around(n);
            assert!(lo <= n && n <= hi);
            assert!(hi as f64 <= lo as f64 * KNOT_RATIO + 1.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mc = McConfig::new(10_000, 9).unwrap();
        let a = ThresholdProfile::new(GainIsThreshold, GainModel::new(3.76, 8.0), &mc);
        let b = ThresholdProfile::new(GainIsThreshold, GainModel::new(3.76, 8.0), &mc);
        for n in [1, 5, 40] {
            assert_eq!(a.mean_served(n, 0.7).to_bits(), b.mean_served(n, 0.7).to_bits());
        }
    }
}
