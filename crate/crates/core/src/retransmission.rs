//! Retransmission analytics for uniform backoff with an attempt limit and a
//! deadline of `M` minislots.
//!
//! A packet transmits in its arrival minislot, then after each failure waits
//! a backoff drawn uniformly from `1..=T_w` minislots. It is dropped once `Z`
//! attempts have failed or the next attempt would fall past the deadline.
//! `A_n` is the event that exactly `n` attempts fit before the deadline, and
//! the eventual failure probability is `δ = Σ ε^n P[A_n]`.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackoffConfig {
    /// `M`; also the deadline in minislots.
    pub minislots_per_slot: usize,
    /// `Z`, counting the first transmission.
    pub max_attempts: usize,
    /// `T_w`; backoffs are uniform on `1..=T_w` minislots.
    pub backoff_window: usize,
    /// `τ_m = τ_s / M`.
    pub minislot_duration_s: f64,
}

impl BackoffConfig {
    /// Config with a one-second slot.
    pub fn new(minislots_per_slot: usize, max_attempts: usize, backoff_window: usize) -> Result<Self> {
        Self::with_slot_duration(minislots_per_slot, max_attempts, backoff_window, 1.0)
    }

    pub fn with_slot_duration(
        minislots_per_slot: usize,
        max_attempts: usize,
        backoff_window: usize,
        slot_duration_s: f64,
    ) -> Result<Self> {
        if minislots_per_slot == 0 {
            return Err(Error::invalid("minislots_per_slot", "must be at least 1"));
        }
        let cfg = BackoffConfig {
            minislots_per_slot,
            max_attempts,
            backoff_window,
            minislot_duration_s: slot_duration_s / minislots_per_slot as f64,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `{M=1, Z=1}`: a single transmission.
    pub fn one_tx() -> Self {
        Self::new(1, 1, 1).expect("valid")
    }

    /// `{T_w=5, M=10, Z=10}`: about four transmissions if every attempt fails.
    pub fn four_tx() -> Self {
        Self::new(10, 10, 5).expect("valid")
    }

    /// `{T_w=5, M=20, Z=10}`: about eight transmissions if every attempt fails.
    pub fn eight_tx() -> Self {
        Self::new(20, 10, 5).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.minislots_per_slot == 0 {
            return Err(Error::invalid("minislots_per_slot", "must be at least 1"));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("max_attempts", "must be at least 1"));
        }
        if self.backoff_window == 0 {
            return Err(Error::invalid("backoff_window", "must be at least 1"));
        }
        if self.max_attempts > self.minislots_per_slot {
            return Err(Error::invalid(
                "max_attempts",
                format!("{} attempts cannot fit in {} minislots", self.max_attempts, self.minislots_per_slot),
            ));
        }
        if !(self.minislot_duration_s > 0.0) || !self.minislot_duration_s.is_finite() {
            return Err(Error::invalid("minislot_duration_s", "must be positive"));
        }
        Ok(())
    }

    pub fn slot_duration_s(&self) -> f64 {
        self.minislot_duration_s * self.minislots_per_slot as f64
    }
}

/// Coefficients of `(1 + y + … + y^(T_w-1))^n`, by exact integer convolution.
pub fn polynomial_coefficients(n: usize, window: usize) -> Result<Vec<u128>> {
    if window == 0 {
        return Err(Error::invalid("backoff_window", "must be at least 1"));
    }
    let overflow = || Error::SupportOverflow { n, window };
    let len = n.checked_mul(window - 1).and_then(|d| d.checked_add(1)).ok_or_else(overflow)?;
    let mut coeffs: Vec<u128> = Vec::with_capacity(len);
    coeffs.push(1);
    for _ in 0..n {
        let mut next = vec![0u128; coeffs.len() + window - 1];
        // Sliding-window sum: next[i] = Σ_{d<window} coeffs[i-d].
        let mut run: u128 = 0;
        for (i, slot) in next.iter_mut().enumerate() {
            if let Some(&c) = coeffs.get(i) {
                run = run.checked_add(c).ok_or_else(overflow)?;
            }
            if i >= window {
                if let Some(&c) = coeffs.get(i - window) {
                    run -= c;
                }
            }
            *slot = run;
        }
        coeffs = next;
    }
    Ok(coeffs)
}

/// pmf of `S_n`, the sum of `n` i.i.d. uniforms on `1..=T_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSumPmf<T> {
    /// Smallest support value, `n`.
    pub offset: usize,
    /// `probs[j] = P[S_n = n + j]`.
    pub probs: Vec<T>,
}

impl<T: Real> UniformSumPmf<T> {
    /// `P[S_n = k]`, zero outside the support.
    pub fn prob(&self, k: usize) -> T {
        k.checked_sub(self.offset)
            .and_then(|j| self.probs.get(j))
            .copied()
            .unwrap_or_else(T::zero)
    }

    /// `P[S_n <= k]`.
    pub fn cdf(&self, k: usize) -> T {
        match k.checked_sub(self.offset) {
            None => T::zero(),
            Some(j) => self.probs.iter().take(j + 1).fold(T::zero(), |a, &p| a + p),
        }
    }

    pub fn support_max(&self) -> usize {
        self.offset + self.probs.len() - 1
    }
}

pub fn uniform_sum_pmf<T: Real>(n: usize, window: usize) -> Result<UniformSumPmf<T>> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    sum_pmf(n, window)
}

/// Like [`uniform_sum_pmf`] but admits `n = 0` (the point mass at zero).
fn sum_pmf<T: Real>(n: usize, window: usize) -> Result<UniformSumPmf<T>> {
    let coeffs = polynomial_coefficients(n, window)?;
    let exponent = u32::try_from(n).map_err(|_| Error::SupportOverflow { n, window })?;
    let total = (window as u128).checked_pow(exponent).ok_or(Error::SupportOverflow { n, window })?;
    let total = total as f64;
    let probs = coeffs.iter().map(|&c| T::of(c as f64 / total)).collect();
    Ok(UniformSumPmf { offset: n, probs })
}

/// `a[n-1] = P[A_n]`, the probability that exactly `n` attempts fit.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptProbs<T> {
    pub a: Vec<T>,
}

impl<T: Real> AttemptProbs<T> {
    /// `δ(ε) = Σ_n ε^n P[A_n]`.
    pub fn failure_prob(&self, epsilon: T) -> T {
        // Horner in ε.
        let inner = self.a.iter().rev().fold(T::zero(), |acc, &a| (acc + a) * epsilon);
        inner.min(T::one()).max(T::zero())
    }

    /// `(1 - δ(ε)) / (1 - ε)` written as `Σ_n a_n (1 + ε + … + ε^(n-1))`, so it
    /// stays finite at `ε = 1` where it equals `Σ_n n·a_n`.
    pub fn attempts_per_packet(&self, epsilon: T) -> T {
        let mut geometric = T::zero();
        let mut power = T::one();
        let mut total = T::zero();
        for &a in &self.a {
            geometric = geometric + power;
            power = power * epsilon;
            total = total + a * geometric;
        }
        total
    }

    /// `Σ_n n·a_n`, the mean attempt count when every attempt fails.
    pub fn max_attempts_per_packet(&self) -> T {
        self.attempts_per_packet(T::one())
    }

    pub fn total(&self) -> T {
        self.a.iter().fold(T::zero(), |a, &b| a + b)
    }
}

pub fn attempt_probs<T: Real>(cfg: &BackoffConfig) -> Result<AttemptProbs<T>> {
    cfg.validate()?;
    let m = cfg.minislots_per_slot;
    let z = cfg.max_attempts;
    let tw = cfg.backoff_window;
    let inv_tw = T::one() / T::of_usize(tw);
    let mut a = Vec::with_capacity(z);
    if z == 1 {
        a.push(T::one());
        return Ok(AttemptProbs { a });
    }

    // P[A_1] = P[X_1 > M - 1]
    a.push(T::one() - T::of_usize((m - 1).min(tw)) * inv_tw);

    // 1 < n < Z: P[M - 1 - X_n < S_{n-1} <= M - 1], averaged over X_n.
    for n in 2..z {
        let pmf = sum_pmf::<T>(n - 1, tw)?;
        let mut p = T::zero();
        for j in 1..=tw {
            for k in (m.saturating_sub(j))..m {
                p = p + pmf.prob(k);
            }
        }
        a.push(p * inv_tw);
    }

    // P[A_Z] = P[S_{Z-1} <= M - 1]
    let pmf = sum_pmf::<T>(z - 1, tw)?;
    a.push(pmf.cdf(m - 1));
    Ok(AttemptProbs { a })
}

pub fn failure_prob<T: Real>(epsilon: T, cfg: &BackoffConfig) -> Result<T> {
    if !(epsilon >= T::zero() && epsilon <= T::one()) {
        return Err(Error::invalid("epsilon", "must be a probability"));
    }
    Ok(attempt_probs::<T>(cfg)?.failure_prob(epsilon))
}

/// Per-attempt outage as a function of the aggregate arrival rate (arrivals/s)
/// and the common rate (bps/Hz). The reference SNR is part of the implementor.
pub trait OutageFunction<T> {
    fn outage(&self, arrival_rate: T, rate: T) -> T;
}

impl<T, F: Fn(T, T) -> T> OutageFunction<T> for F {
    fn outage(&self, arrival_rate: T, rate: T) -> T {
        self(arrival_rate, rate)
    }
}

/// Caches another outage function by exact `(arrival_rate, rate)` bits.
pub struct Memoized<O> {
    inner: O,
    cache: Mutex<HashMap<(u64, u64), f64>>,
}

impl<O> Memoized<O> {
    pub fn new(inner: O) -> Self {
        Memoized { inner, cache: Mutex::new(HashMap::new()) }
    }

    pub fn cached_points(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

impl<T: Real, O: OutageFunction<T>> OutageFunction<T> for Memoized<O> {
    fn outage(&self, arrival_rate: T, rate: T) -> T {
        let key = (arrival_rate.to_f64_lossy().to_bits(), rate.to_f64_lossy().to_bits());
        if let Some(&v) = self.cache.lock().expect("cache lock").get(&key) {
            return T::of(v);
        }
        let v = self.inner.outage(arrival_rate, rate);
        self.cache.lock().expect("cache lock").insert(key, v.to_f64_lossy());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    /// Relative change `|x - Ψ(x)| / x` accepted as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { tolerance: 1e-6, max_iterations: 200 }
    }
}

/// Converged operating point of the retransmission loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveRate<T> {
    /// Aggregate arrival rate of first attempts and retransmissions.
    pub x: T,
    pub epsilon: T,
    pub delta: T,
    pub iterations: usize,
}

/// Solves `x = λ (1 - δ(ε(x))) / (1 - ε(x))` by plain iteration from `x = λ`.
pub fn effective_arrival_rate<T: Real, O: OutageFunction<T> + ?Sized>(
    lambda: T,
    outage_fn: &O,
    rate: T,
    cfg: &BackoffConfig,
    fp: &FixedPointConfig,
) -> Result<EffectiveRate<T>> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be positive"));
    }
    if !(fp.tolerance > 0.0) {
        return Err(Error::invalid("tolerance", "must be positive"));
    }
    let probs = attempt_probs::<T>(cfg)?;
    let tol = T::of(fp.tolerance);
    let mut x = lambda;
    let mut change = f64::INFINITY;
    for iteration in 1..=fp.max_iterations {
        let epsilon = outage_fn.outage(x, rate).max(T::zero()).min(T::one());
        let next = lambda * probs.attempts_per_packet(epsilon);
        let rel = (next - x).abs() / x;
        change = rel.to_f64_lossy();
        if rel < tol {
            return Ok(EffectiveRate { x, epsilon, delta: probs.failure_prob(epsilon), iterations: iteration });
        }
        x = next;
    }
    Err(Error::NoConvergence { iterations: fp.max_iterations, last: x.to_f64_lossy(), change })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent Gamma-function form of the uniform-sum pmf (alternating sum).
    fn gamma_form_pmf(n: usize, tw: usize, j: usize) -> f64 {
        fn ln_gamma_int(k: usize) -> f64 {
            // Γ(k) = (k-1)!
            (1..k).map(|i| (i as f64).ln()).sum()
        }
        let mut s = 0.0;
        for p in 0..=(j / tw) {
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            if p > n {
                break;
            }
            let ln = ln_gamma_int(n + j - p * tw) - ln_gamma_int(p + 1) - ln_gamma_int(n - p + 1)
                - ln_gamma_int(j - p * tw + 1);
            s += sign * ln.exp();
        }
        n as f64 / (tw as f64).powi(n as i32) * s
    }

    /// Enumerates all `T_w^n` backoff sequences.
    fn enumerate_sums(n: usize, tw: usize) -> Vec<f64> {
        let mut counts = vec![0f64; n * tw + 1];
        let total = tw.pow(n as u32);
        for idx in 0..total {
            let mut rest = idx;
            let mut s = 0;
            for _ in 0..n {
                s += rest % tw + 1;
                rest /= tw;
            }
            counts[s] += 1.0;
        }
        counts.iter().map(|c| c / total as f64).collect()
    }

    /// Brute-force P[A_n] by enumerating `Z - 1` backoffs.
    fn enumerate_attempts(m: usize, z: usize, tw: usize) -> Vec<f64> {
        let mut a = vec![0.0; z];
        let draws = z - 1;
        let total = tw.pow(draws as u32);
        for idx in 0..total {
            let mut rest = idx;
            let mut t = 1; // first attempt in minislot 1
            let mut fit = 1;
            for _ in 0..draws {
                t += rest % tw + 1;
                rest /= tw;
                if t <= m {
                    fit += 1;
                } else {
                    break;
                }
            }
            a[fit - 1] += 1.0 / total as f64;
        }
        a
    }

    #[test]
    fn pmf_single_variable_is_uniform() {
        let p = uniform_sum_pmf::<f64>(1, 7).unwrap();
        assert_eq!(p.offset, 1);
        assert!(p.probs.iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn pmf_two_coins() {
        let p = uniform_sum_pmf::<f64>(2, 2).unwrap();
        assert_eq!(p.probs, vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn pmf_matches_gamma_form_and_enumeration() {
        for n in 1..=10 {
            for tw in 1..=10 {
                let p = uniform_sum_pmf::<f64>(n, tw).unwrap();
                let total: f64 = p.probs.iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
                for (j, &v) in p.probs.iter().enumerate() {
                    let g = gamma_form_pmf(n, tw, j);
                    assert!((v - g).abs() < 1e-9, "n={n} tw={tw} j={j}: {v} vs {g}");
                    // symmetry about n(T_w+1)/2
                    assert!((v - p.probs[p.probs.len() - 1 - j]).abs() < 1e-15);
                }
                if tw.pow(n as u32) <= 200_000 {
                    let e = enumerate_sums(n, tw);
                    for k in n..=n * tw {
                        assert!((p.prob(k) - e[k]).abs() < 1e-12);
                    }
                }
            }
        }
        let p = uniform_sum_pmf::<f64>(3, 5).unwrap();
        for j in 0..p.probs.len() {
            assert!((p.probs[j] - gamma_form_pmf(3, 5, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn pmf_errors() {
        assert!(uniform_sum_pmf::<f64>(0, 3).is_err());
        assert!(matches!(uniform_sum_pmf::<f64>(200, 100), Err(Error::SupportOverflow { .. })));
        assert!(matches!(polynomial_coefficients(usize::MAX, 3), Err(Error::SupportOverflow { .. })));
    }

    #[test]
    fn attempt_probs_examples() {
        for (m, tw) in [(1, 1), (5, 3), (10, 20)] {
            let a = attempt_probs::<f64>(&BackoffConfig::new(m, 1, tw).unwrap()).unwrap();
            assert_eq!(a.a, vec![1.0]);
        }
        let a = attempt_probs::<f64>(&BackoffConfig::new(2, 2, 1).unwrap()).unwrap();
        assert_eq!(a.a, vec![0.0, 1.0]);
        let a = attempt_probs::<f64>(&BackoffConfig::new(1, 1, 5).unwrap()).unwrap();
        assert_eq!(a.a, vec![1.0]);
    }

    #[test]
    fn m1_z2_is_rejected_since_two_attempts_never_fit() {
        // Z <= M; with M = 1 the single minislot admits one attempt only.
        assert!(BackoffConfig::new(1, 2, 5).is_err());
        // The same outcome via a longer deadline whose backoffs never fit:
        let a = attempt_probs::<f64>(&BackoffConfig::new(2, 2, 5).unwrap()).unwrap();
        assert!((a.a[0] - 0.8).abs() < 1e-15 && (a.a[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn attempt_probs_match_enumeration() {
        for m in 1..=9 {
            for z in 1..=m.min(6) {
                for tw in 1..=5 {
                    let cfg = BackoffConfig::new(m, z, tw).unwrap();
                    let a = attempt_probs::<f64>(&cfg).unwrap();
                    let e = enumerate_attempts(m, z, tw);
                    for n in 0..z {
                        assert!((a.a[n] - e[n]).abs() < 1e-12, "M={m} Z={z} Tw={tw} n={}", n + 1);
                    }
                    assert!((a.total() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn failure_prob_examples() {
        let one = BackoffConfig::new(1, 1, 1).unwrap();
        for eps in [0.0, 0.1, 0.5, 1.0] {
            assert_eq!(failure_prob(eps, &one).unwrap(), eps);
        }
        let cfg = BackoffConfig::new(2, 2, 1).unwrap();
        assert_eq!(failure_prob(0.0, &cfg).unwrap(), 0.0);
        assert!((failure_prob(0.5f64, &cfg).unwrap() - 0.25).abs() < 1e-15);
        assert!((failure_prob(1.0f64, &BackoffConfig::four_tx()).unwrap() - 1.0).abs() < 1e-12);
        assert!(failure_prob(1.5, &cfg).is_err());
    }

    #[test]
    fn failure_prob_f32() {
        let d32 = failure_prob(0.3f32, &BackoffConfig::four_tx()).unwrap();
        let d64 = failure_prob(0.3f64, &BackoffConfig::four_tx()).unwrap();
        assert!((d32 as f64 - d64).abs() < 1e-6);
    }

    #[test]
    fn named_cases_average_attempts() {
        // 2M/(T_w+1): about 4 and 8 transmissions.
        let four = attempt_probs::<f64>(&BackoffConfig::four_tx()).unwrap().max_attempts_per_packet();
        let eight = attempt_probs::<f64>(&BackoffConfig::eight_tx()).unwrap().max_attempts_per_packet();
        assert!((four - 10.0 / 3.0).abs() < 0.6, "{four}");
        assert!((eight - 20.0 / 3.0).abs() < 0.8, "{eight}");
    }

    #[test]
    fn fixed_point_examples() {
        let fp = FixedPointConfig::default();
        let one = BackoffConfig::one_tx();
        let r = effective_arrival_rate(5.0, &|x: f64, _r: f64| (x / 20.0).min(1.0), 0.3, &one, &fp).unwrap();
        assert_eq!(r.x, 5.0);
        assert_eq!(r.delta, r.epsilon);

        let cfg = BackoffConfig::four_tx();
        let r = effective_arrival_rate(7.0, &|_x: f64, _r: f64| 0.0, 0.3, &cfg, &fp).unwrap();
        assert_eq!((r.x, r.epsilon, r.delta), (7.0, 0.0, 0.0));

        let cfg = BackoffConfig::new(2, 2, 1).unwrap();
        for c in [0.1, 0.5, 0.9] {
            let r = effective_arrival_rate(3.0, &move |_x: f64, _r: f64| c, 1.0, &cfg, &fp).unwrap();
            assert!((r.x - 3.0 * (1.0 + c)).abs() < 1e-12);
            assert!((r.delta - c * c).abs() < 1e-15);
        }
    }

    #[test]
    fn fixed_point_bounds_and_residual() {
        let fp = FixedPointConfig::default();
        let lambda = 4.0;
        let outage = |x: f64, _r: f64| 1.0 - (-x / 10.0).exp();
        for cfg in [BackoffConfig::four_tx(), BackoffConfig::eight_tx()] {
            let probs = attempt_probs::<f64>(&cfg).unwrap();
            let r = effective_arrival_rate(lambda, &outage, 0.5, &cfg, &fp).unwrap();
            assert!(r.x >= lambda);
            assert!(r.x <= lambda * probs.max_attempts_per_packet() + 1e-9);
            let psi = lambda * (1.0 - r.delta) / (1.0 - r.epsilon);
            assert!((r.x - psi).abs() / r.x < 1e-6);
            assert_eq!(r.epsilon, outage(r.x, 0.5));
        }
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        // A decreasing outage makes Ψ oscillate.
        let cfg = BackoffConfig::new(2, 2, 1).unwrap();
        let bad = |x: f64, _r: f64| if x < 1.5 { 0.9 } else { 0.0 };
        let fp = FixedPointConfig { tolerance: 1e-6, max_iterations: 50 };
        match effective_arrival_rate(1.0, &bad, 1.0, &cfg, &fp) {
            Err(Error::NoConvergence { iterations, last, .. }) => {
                assert_eq!(iterations, 50);
                assert!(last == 1.0 || last == 1.9);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn memoized_evaluates_once() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let calls = AtomicUsize::new(0);
        let f = |x: f64, _r: f64| {
            calls.fetch_add(1, Ordering::SeqCst);
            x / 100.0
        };
        let m = Memoized::new(f);
        for _ in 0..3 {
            assert_eq!(m.outage(5.0, 1.0), 0.05);
        }
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(m.cached_points(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cfg_strategy() -> impl Strategy<Value = BackoffConfig> {
            (1usize..=24, 1usize..=12, 1usize..=12).prop_filter_map("Z <= M", |(m, z, tw)| {
                BackoffConfig::new(m, z, tw).ok()
            })
        }

        proptest! {
            #[test]
            fn attempt_probs_partition(cfg in cfg_strategy()) {
                let a = attempt_probs::<f64>(&cfg).unwrap();
                prop_assert!((a.total() - 1.0).abs() < 1e-9);
                prop_assert!(a.a.iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
            }

            #[test]
            fn delta_below_epsilon_and_increasing(cfg in cfg_strategy(), e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
                let a = attempt_probs::<f64>(&cfg).unwrap();
                let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
                prop_assert!(a.failure_prob(lo) <= lo + 1e-15);
                prop_assert!(a.failure_prob(lo) <= a.failure_prob(hi));
                if hi - lo > 1e-9 {
                    prop_assert!(a.failure_prob(lo) < a.failure_prob(hi));
                }
            }

            #[test]
            fn attempts_per_packet_matches_ratio(cfg in cfg_strategy(), eps in 0.0f64..0.999) {
                let a = attempt_probs::<f64>(&cfg).unwrap();
                let ratio = (1.0 - a.failure_prob(eps)) / (1.0 - eps);
                prop_assert!((a.attempts_per_packet(eps) - ratio).abs() < 1e-9 * ratio.max(1.0));
            }

            #[test]
            fn psi_monotone_for_monotone_outage(cfg in cfg_strategy(), x1 in 0.1f64..50.0, x2 in 0.1f64..50.0) {
                let a = attempt_probs::<f64>(&cfg).unwrap();
                let outage = |x: f64| 1.0 - 1.0 / (1.0 + x / 8.0);
                let psi = |x: f64| 3.0 * a.attempts_per_packet(outage(x));
                let (lo, hi) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
                prop_assert!(psi(lo) <= psi(hi) + 1e-12);
            }
        }
    }
}
