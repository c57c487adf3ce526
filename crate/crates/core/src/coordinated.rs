//! Coordinated (scheduled) access: common-rate formulas for joint MAC
//! decoding and equal-bandwidth FDMA, and their outage functions.

use crate::channel_model::{GainModel, ReferenceSnr};
use crate::error::{Error, Result};
use crate::mc::{poisson_spread, stream_rng, McConfig, OutageEstimate, PoissonWeights};
use crate::profile::{ThresholdProfile, ThresholdRule};
use crate::real::Real;
use crate::retransmission::OutageFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoordinatedStrategy {
    /// Joint decoding of all scheduled users.
    Optimal,
    /// One user per equal subband.
    Fdma,
}

/// Channel gains sorted ascending with aligned prefix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct GainVector<T> {
    gains: Vec<T>,
    prefix_sums: Vec<T>,
}

impl<T: Real> GainVector<T> {
    pub fn new(mut gains: Vec<T>) -> Self {
        gains.sort_by(|a, b| a.partial_cmp(b).expect("gains are not NaN"));
        let prefix_sums = gains
            .iter()
            .scan(T::zero(), |acc, &g| {
                *acc = *acc + g;
                Some(*acc)
            })
            .collect();
        GainVector { gains, prefix_sums }
    }

    pub fn gains(&self) -> &[T] {
        &self.gains
    }

    /// `prefix_sums[j] = Σ_{k<=j} gains[k]`.
    pub fn prefix_sums(&self) -> &[T] {
        &self.prefix_sums
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// The `count` strongest gains.
    pub fn strongest(&self, count: usize) -> GainVector<T> {
        let start = self.gains.len() - count.min(self.gains.len());
        GainVector::new(self.gains[start..].to_vec())
    }
}

/// `min_j (1/j)·log2(1 + μ Σ_{k<=j} g_k)` over the ascending gains: the
/// largest rate every user can get simultaneously under joint decoding.
pub fn common_rate_optimal<T: Real>(gains: &GainVector<T>, mu: ReferenceSnr<T>) -> Result<T> {
    if gains.is_empty() {
        return Err(Error::EmptyGains);
    }
    Ok(weakest_prefix_rate(gains.prefix_sums(), mu.linear()))
}

fn weakest_prefix_rate<T: Real>(prefix_sums: &[T], mu: T) -> T {
    prefix_sums
        .iter()
        .enumerate()
        .map(|(j, &s)| (T::one() + mu * s).log2() / T::of_usize(j + 1))
        .fold(T::infinity(), T::min)
}

/// `(1/B)·log2(1 + B μ g_min)`.
pub fn common_rate_fdma<T: Real>(gains: &GainVector<T>, mu: ReferenceSnr<T>, subbands: usize) -> Result<T> {
    if subbands < 1 {
        return Err(Error::invalid("subbands", "must be at least 1"));
    }
    let weakest = *gains.gains().first().ok_or(Error::EmptyGains)?;
    Ok(fdma_rate(weakest, mu.linear(), subbands))
}

fn fdma_rate<T: Real>(gain: T, mu: T, subbands: usize) -> T {
    let b = T::of_usize(subbands);
    (T::one() + b * mu * gain).log2() / b
}

/// Common rate when the slot is split into `M` minislots and `B` subbands,
/// one user per block.
pub fn tdma_split_rate<T: Real>(
    gains: &GainVector<T>,
    mu: ReferenceSnr<T>,
    minislots: usize,
    subbands: usize,
) -> Result<T> {
    if minislots < 1 {
        return Err(Error::invalid("minislots", "must be at least 1"));
    }
    Ok(common_rate_fdma(gains, mu, subbands)? / T::of_usize(minislots))
}

/// Largest number of users that can be served at common rate `rate`.
pub fn max_served<T: Real>(gains: &GainVector<T>, mu: ReferenceSnr<T>, rate: T, strategy: CoordinatedStrategy) -> usize {
    let k = gains.len();
    let g = gains.gains();
    let mu = mu.linear();
    match strategy {
        CoordinatedStrategy::Optimal => {
            // Serving the K' strongest is feasible iff their common rate
            // reaches `rate`; feasibility only shrinks as weaker users join.
            let feasible = |count: usize| -> bool {
                if count == 0 {
                    return true;
                }
                let mut sum = T::zero();
                for (j, &gain) in g[k - count..].iter().enumerate() {
                    sum = sum + gain;
                    if (T::one() + mu * sum).log2() < rate * T::of_usize(j + 1) {
                        return false;
                    }
                }
                true
            };
            let (mut lo, mut hi) = (0usize, k);
            while lo < hi {
                let mid = lo + (hi - lo).div_ceil(2);
                if feasible(mid) {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            lo
        }
        CoordinatedStrategy::Fdma => {
            // The B-th strongest user must reach the rate on a 1/B subband.
            (1..=k).take_while(|&b| fdma_rate(g[k - b], mu, b) >= rate).count()
        }
    }
}

/// Per-realization rate thresholds for the coordinated strategies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinatedRule {
    pub strategy: CoordinatedStrategy,
    pub mu: f64,
}

impl ThresholdRule for CoordinatedRule {
    fn thresholds(&self, gains: &mut [f64], out: &mut Vec<f64>) {
        gains.sort_by(|a, b| b.total_cmp(a));
        match self.strategy {
            CoordinatedStrategy::Optimal => {
                // Common rate of the K' strongest, for K' = 1..K; non-increasing.
                let mut prefix = Vec::with_capacity(gains.len() + 1);
                prefix.push(0.0);
                for &g in gains.iter() {
                    prefix.push(prefix.last().copied().unwrap_or(0.0) + g);
                }
                for count in 1..=gains.len() {
                    let mut best = f64::INFINITY;
                    for j in 1..=count {
                        let s = prefix[count] - prefix[count - j];
                        best = best.min((self.mu * s).ln_1p() / (j as f64 * std::f64::consts::LN_2));
                    }
                    out.push(best);
                }
            }
            CoordinatedStrategy::Fdma => {
                out.extend(gains.iter().enumerate().map(|(i, &g)| fdma_rate(g, self.mu, i + 1)));
            }
        }
    }
}

/// Coordinated outage `1 - E[max served] / (λ τ_s)` estimated from a
/// stratified profile; evaluations at any `(λ, R)` share samples.
pub struct CoordinatedOutage {
    profile: ThresholdProfile<CoordinatedRule>,
    slot_duration_s: f64,
    truncation: Option<usize>,
    user_budget: usize,
}

impl CoordinatedOutage {
    pub fn new(strategy: CoordinatedStrategy, mu: ReferenceSnr<f64>, model: GainModel, mc: &McConfig) -> Self {
        let rule = CoordinatedRule { strategy, mu: mu.linear() };
        CoordinatedOutage {
            profile: ThresholdProfile::new(rule, model, mc),
            slot_duration_s: 1.0,
            truncation: mc.poisson_truncation,
            user_budget: mc.realizations,
        }
    }

    pub fn with_slot_duration(mut self, slot_duration_s: f64) -> Self {
        self.slot_duration_s = slot_duration_s;
        self
    }

    pub fn strategy(&self) -> CoordinatedStrategy {
        self.profile.rule().strategy
    }

    pub fn expected_served(&self, lambda: f64, rate: f64) -> f64 {
        self.profile.poisson_mean_served(lambda * self.slot_duration_s, rate, self.truncation)
    }

    pub fn estimate(&self, lambda: f64, rate: f64) -> OutageEstimate {
        let mean = lambda * self.slot_duration_s;
        let epsilon = (1.0 - self.expected_served(lambda, rate) / mean).clamp(0.0, 1.0);
        // Binomial approximation per stratum, `user_budget` user-trials each.
        let stderr = (epsilon * (1.0 - epsilon) * poisson_spread(mean, self.truncation) / self.user_budget as f64).sqrt();
        OutageEstimate { epsilon, stderr }
    }
}

impl OutageFunction<f64> for CoordinatedOutage {
    fn outage(&self, arrival_rate: f64, rate: f64) -> f64 {
        self.estimate(arrival_rate, rate).epsilon
    }
}

/// Direct Monte Carlo outage: Poisson user counts, fresh gains per
/// realization, [`max_served`] per realization.
pub fn outage_coordinated(
    lambda: f64,
    mu: ReferenceSnr<f64>,
    rate: f64,
    strategy: CoordinatedStrategy,
    model: &GainModel,
    mc: &McConfig,
) -> Result<OutageEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    if !(rate > 0.0) {
        return Err(Error::invalid("rate", "must be positive"));
    }
    mc.validate()?;
    model.validate()?;
    let weights = PoissonWeights::new(lambda, Some(mc.truncation(lambda)));
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for i in 0..mc.realizations {
        let mut rng = stream_rng(mc.seed, i as u64);
        let k = weights.quantile(rand::Rng::random(&mut rng));
        let gains = GainVector::new((0..k).map(|_| model.sample_gain(&mut rng)).collect());
        let served = max_served(&gains, mu, rate, strategy) as f64;
        sum += served;
        sum_sq += served * served;
    }
    let n = mc.realizations as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok(OutageEstimate {
        epsilon: (1.0 - mean / lambda).clamp(0.0, 1.0),
        stderr: (var / n).sqrt() / lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn mu(v: f64) -> ReferenceSnr<f64> {
        ReferenceSnr::from_linear(v).unwrap()
    }

    /// `min over non-empty subsets X of (1/|X|)·log2(1 + μ Σ_X g)`.
    fn brute_force_common_rate(g: &[f64], mu: f64) -> f64 {
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << g.len()) {
            let s: f64 = (0..g.len()).filter(|i| mask >> i & 1 == 1).map(|i| g[i]).sum();
            best = best.min((1.0 + mu * s).log2() / mask.count_ones() as f64);
        }
        best
    }

    #[test]
    fn common_rate_examples() {
        let one = GainVector::new(vec![1.0]);
        assert_eq!(common_rate_optimal(&one, mu(1.0)).unwrap(), 1.0);
        let two = GainVector::new(vec![1.0, 1.0]);
        let r = common_rate_optimal(&two, mu(1.0)).unwrap();
        assert!((r - 0.792_481_250_360_578).abs() < 1e-12);
        assert!((r - brute_force_common_rate(&[1.0, 1.0], 1.0)).abs() < 1e-15);
        assert_eq!(common_rate_optimal(&GainVector::<f64>::new(vec![]), mu(1.0)), Err(Error::EmptyGains));
    }

    #[test]
    fn fdma_examples() {
        assert_eq!(common_rate_fdma(&GainVector::new(vec![1.0]), mu(1.0), 1).unwrap(), 1.0);
        let r = common_rate_fdma(&GainVector::new(vec![4.0, 1.0]), mu(1.0), 2).unwrap();
        assert!((r - 0.5 * 3f64.log2()).abs() < 1e-15);
        let a = common_rate_fdma(&GainVector::new(vec![2.0, 2.0]), mu(3.0), 2).unwrap();
        let b = common_rate_fdma(&GainVector::new(vec![2.0, 9.0]), mu(3.0), 2).unwrap();
        assert_eq!(a, b);
        assert!(common_rate_fdma(&GainVector::new(vec![1.0]), mu(1.0), 0).is_err());
    }

    #[test]
    fn tdma_split_examples() {
        let g = GainVector::new(vec![1.0, 3.0, 7.0]);
        assert_eq!(tdma_split_rate(&g, mu(1.0), 1, 3).unwrap(), common_rate_fdma(&g, mu(1.0), 3).unwrap());
        let g1 = GainVector::new(vec![1.0]);
        let a = tdma_split_rate(&g1, mu(1.0), 1, 4).unwrap();
        let b = tdma_split_rate(&g1, mu(1.0), 2, 2).unwrap();
        assert!((a - 0.25 * 5f64.log2()).abs() < 1e-15 && (a - 0.5805).abs() < 1e-4);
        assert!((b - 0.25 * 3f64.log2()).abs() < 1e-15 && (b - 0.3962).abs() < 1e-4);
        let mut last = f64::INFINITY;
        for m in 1..6 {
            let v = tdma_split_rate(&g, mu(2.0), m, 2).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn max_served_examples() {
        let g = GainVector::new(vec![10.0]);
        assert_eq!(max_served(&g, mu(1.0), 0.5, CoordinatedStrategy::Optimal), 1);
        assert_eq!(max_served(&g, mu(1.0), 0.5, CoordinatedStrategy::Fdma), 1);
        let e = GainVector::<f64>::new(vec![]);
        assert_eq!(max_served(&e, mu(1.0), 0.5, CoordinatedStrategy::Optimal), 0);
        assert_eq!(max_served(&e, mu(1.0), 0.5, CoordinatedStrategy::Fdma), 0);
    }

    fn random_gains(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| GainModel::new(3.76, 6.0).sample_gain(rng)).collect()
    }

    #[test]
    fn prefix_scan_equals_subset_brute_force() {
        let mut rng = stream_rng(17, 0);
        for _ in 0..1000 {
            let n = rng.random_range(1..=10);
            let g = random_gains(&mut rng, n);
            let m = 10f64.powf(rng.random_range(-1.0..1.0));
            let fast = common_rate_optimal(&GainVector::new(g.clone()), mu(m)).unwrap();
            let slow = brute_force_common_rate(&g, m);
            assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0), "{g:?}");
        }
    }

    #[test]
    fn max_served_matches_exhaustive_scan() {
        let mut rng = stream_rng(18, 0);
        for _ in 0..2000 {
            let g = GainVector::new(random_gains(&mut rng, 6));
            let rate = 10f64.powf(rng.random_range(-2.0..1.0));
            let exhaustive = (0..=6)
                .filter(|&k| k == 0 || common_rate_optimal(&g.strongest(k), mu(1.0)).unwrap() >= rate)
                .max()
                .unwrap();
            assert_eq!(max_served(&g, mu(1.0), rate, CoordinatedStrategy::Optimal), exhaustive);
            let fdma = (0..=6)
                .filter(|&b| b == 0 || common_rate_fdma(&g.strongest(b), mu(1.0), b).unwrap() >= rate)
                .max()
                .unwrap();
            assert_eq!(max_served(&g, mu(1.0), rate, CoordinatedStrategy::Fdma), fdma);
        }
    }

    #[test]
    fn strongest_subset_is_best_subset() {
        // No subset of a given size beats the strongest one.
        let mut rng = stream_rng(19, 0);
        for _ in 0..500 {
            let g = random_gains(&mut rng, 7);
            let rate = 10f64.powf(rng.random_range(-1.5..0.5));
            let mut best = 0;
            for mask in 1u32..(1 << 7) {
                let sub: Vec<f64> = (0..7).filter(|i| mask >> i & 1 == 1).map(|i| g[i]).collect();
                if brute_force_common_rate(&sub, 1.0) >= rate {
                    best = best.max(sub.len());
                }
            }
            assert_eq!(max_served(&GainVector::new(g), mu(1.0), rate, CoordinatedStrategy::Optimal), best);
        }
    }

    #[test]
    fn joint_decoding_dominates_fdma() {
        let mut rng = stream_rng(20, 0);
        for _ in 0..10_000 {
            let n = rng.random_range(0..=12);
            let g = GainVector::new(random_gains(&mut rng, n));
            let rate = 10f64.powf(rng.random_range(-2.0..1.0));
            let o = max_served(&g, mu(1.0), rate, CoordinatedStrategy::Optimal);
            let f = max_served(&g, mu(1.0), rate, CoordinatedStrategy::Fdma);
            assert!(o >= f, "{g:?} at {rate}");
        }
    }

    #[test]
    fn thresholds_reproduce_max_served() {
        let mut rng = stream_rng(21, 0);
        for strategy in [CoordinatedStrategy::Optimal, CoordinatedStrategy::Fdma] {
            let rule = CoordinatedRule { strategy, mu: 1.0 };
            for _ in 0..500 {
                let n = rng.random_range(0..=15);
                let mut g = random_gains(&mut rng, n);
                let gv = GainVector::new(g.clone());
                let mut t = Vec::new();
                rule.thresholds(&mut g, &mut t);
                for rate in [0.01, 0.1, 0.3, 1.0, 3.0] {
                    let count = t.iter().filter(|&&v| v >= rate).count();
                    assert_eq!(count, max_served(&gv, mu(1.0), rate, strategy));
                }
            }
        }
    }

    #[test]
    fn profile_agrees_with_direct_estimator() {
        let model = GainModel::new(3.76, 0.0);
        let mc = McConfig::new(20_000, 5).unwrap();
        for strategy in [CoordinatedStrategy::Optimal, CoordinatedStrategy::Fdma] {
            let prof = CoordinatedOutage::new(strategy, mu(1.0), model, &mc);
            for rate in [0.1, 0.3] {
                let direct = outage_coordinated(8.0, mu(1.0), rate, strategy, &model, &mc).unwrap();
                let strat = prof.estimate(8.0, rate);
                let tol = 4.0 * (direct.stderr.powi(2) + strat.stderr.powi(2)).sqrt() + 1e-3;
                assert!((direct.epsilon - strat.epsilon).abs() < tol, "{strategy:?} R={rate}: {direct:?} {strat:?}");
            }
        }
    }

    #[test]
    fn outage_vanishes_at_small_rate_and_grows() {
        let model = GainModel::new(3.76, 0.0);
        let mc = McConfig::new(10_000, 6).unwrap();
        let prof = CoordinatedOutage::new(CoordinatedStrategy::Optimal, mu(1.0), model, &mc);
        assert!(prof.outage(16.0, 1e-6) < 1e-3);
        let mut last = 0.0;
        for rate in [0.05, 0.1, 0.2, 0.4, 0.8, 1.6] {
            let e = prof.outage(16.0, rate);
            assert!(e >= last);
            last = e;
        }
        let mut last = 0.0;
        for lambda in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let e = prof.outage(lambda, 0.3);
            assert!(e + 2e-3 >= last, "λ={lambda}");
            last = e;
        }
    }

    #[test]
    fn disjoint_seeds_agree_within_ci() {
        let model = GainModel::new(3.76, 4.0);
        for strategy in [CoordinatedStrategy::Optimal, CoordinatedStrategy::Fdma] {
            let a = outage_coordinated(16.0, mu(1.0), 0.3, strategy, &model, &McConfig::new(5_000, 100).unwrap()).unwrap();
            let b = outage_coordinated(16.0, mu(1.0), 0.3, strategy, &model, &McConfig::new(5_000, 200).unwrap()).unwrap();
            let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
            assert!((a.epsilon - b.epsilon).abs() < 3.0 * se, "{a:?} {b:?}");
        }
    }

    #[test]
    fn generic_f32_rate() {
        let g = GainVector::new(vec![1.0f32, 1.0]);
        let r = common_rate_optimal(&g, ReferenceSnr::from_linear(1.0f32).unwrap()).unwrap();
        assert!((r - 0.792_481_25).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn appending_a_weaker_user_never_raises_the_rate(
                g in proptest::collection::vec(0.01f64..100.0, 1..12),
                frac in 0.0f64..1.0,
            ) {
                let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
                let base = common_rate_optimal(&GainVector::new(g.clone()), mu(1.0)).unwrap();
                let mut more = g;
                more.push(min * frac.max(1e-6));
                let after = common_rate_optimal(&GainVector::new(more), mu(1.0)).unwrap();
                prop_assert!(after <= base + 1e-15);
            }

            #[test]
            fn tdma_split_maximized_without_minislots(g1 in 1e-3f64..100.0, m in 0.1f64..10.0, total in 1usize..6) {
                // Fixed MB product: compare (1, MB) against every (M, B) split.
                let product = 1usize << total;
                let gains = GainVector::new(vec![g1]);
                let best = tdma_split_rate(&gains, mu(m), 1, product).unwrap();
                let mut minislots = 2;
                while minislots <= product {
                    let v = tdma_split_rate(&gains, mu(m), minislots, product / minislots).unwrap();
                    prop_assert!(best >= v);
                    minislots *= 2;
                }
            }
        }
    }
}
