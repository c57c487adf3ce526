//! Uncoordinated access: the largest decodable set of colliding
//! transmitters with undecoded users treated as noise, optimized over the
//! transmission probability, and the aloha-FDMA outage.

use std::collections::HashMap;

use rand::Rng;

use crate::channel_model::{GainDistribution, GainModel, ReferenceSnr};
use crate::error::{Error, Result};
use crate::mc::{binomial_stderr, poisson_spread, stream_rng, McConfig, OutageEstimate, PoissonWeights};
use crate::profile::{poisson_mix, ThresholdProfile, ThresholdRule};
use crate::real::Real;
use crate::retransmission::{BackoffConfig, OutageFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UncoordinatedStrategy {
    /// Joint decoding of the largest decodable subset.
    Optimal,
    /// Each transmitter picks one of `B` subbands at random.
    AlohaFdma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult<T> {
    pub decoded_count: usize,
    /// Indices into the input gains, strongest first.
    pub decoded_set: Vec<usize>,
    /// `μ Σ g` over the transmitters left undecoded.
    pub interference_power: T,
}

/// Largest set `L` of transmitters such that every `L̃ ⊆ L` satisfies
/// `|L̃|·R_m <= log2(1 + μ Σ_{L̃} g / (1 + μ Σ_{T−L} g))`.
///
/// The best set of each size is the strongest one, so only the `Ω + 1`
/// top-k sets are tested, largest first.
pub fn max_decodable_set<T: Real>(gains: &[T], mu: ReferenceSnr<T>, rate_minislot: T) -> DecodeResult<T> {
    let mu = mu.linear();
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[b].partial_cmp(&gains[a]).expect("gains are not NaN"));
    let desc: Vec<T> = order.iter().map(|&i| gains[i]).collect();
    // suffix[k] = Σ_{m>=k} desc[m]
    let mut suffix = vec![T::zero(); desc.len() + 1];
    for k in (0..desc.len()).rev() {
        suffix[k] = suffix[k + 1] + desc[k];
    }
    for k in (1..=desc.len()).rev() {
        let noise = T::one() + mu * suffix[k];
        let mut weakest = T::zero();
        let feasible = (1..=k).all(|j| {
            weakest = weakest + desc[k - j];
            (T::one() + mu * weakest / noise).log2() >= rate_minislot * T::of_usize(j)
        });
        if feasible {
            return DecodeResult {
                decoded_count: k,
                decoded_set: order[..k].to_vec(),
                interference_power: mu * suffix[k],
            };
        }
    }
    DecodeResult { decoded_count: 0, decoded_set: Vec::new(), interference_power: mu * suffix[0] }
}

/// Per-realization thresholds `c_k` such that `max |L| = #{k : c_k >= R_m}`.
///
/// With `Q_i = log2(1 + μ Σ_{m>=i} g_m)` over descending gains, the top-k
/// set decodes iff `R_m <= r_k = min_{i<k} (Q_i − Q_k)/(k − i)`; `r_k` is
/// the tangent from `(k, Q_k)` to the lower hull of the earlier points, and
/// `c_k` is the suffix maximum of `r_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeRule {
    pub mu: f64,
}

impl DecodeRule {
    fn tangent_rates(&self, gains: &mut [f64], out: &mut Vec<f64>) {
        gains.sort_by(|a, b| b.total_cmp(a));
        let n = gains.len();
        let mut q = vec![0.0; n + 1];
        let mut tail = 0.0;
        for i in (0..n).rev() {
            tail += gains[i];
            q[i] = (self.mu * tail).ln_1p() / std::f64::consts::LN_2;
        }
        let slope = |a: usize, b: usize| (q[b] - q[a]) / (b - a) as f64;
        let mut hull: Vec<usize> = Vec::with_capacity(n);
        for k in 1..=n {
            let i = k - 1;
            while hull.len() >= 2 && slope(hull[hull.len() - 2], hull[hull.len() - 1]) >= slope(hull[hull.len() - 1], i) {
                hull.pop();
            }
            hull.push(i);
            // First hull vertex from which stepping right stops raising the slope to k.
            let (mut lo, mut hi) = (0usize, hull.len() - 1);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if slope(hull[mid], hull[mid + 1]) < slope(hull[mid], k) {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            out.push(-slope(hull[lo], k));
        }
    }
}

impl ThresholdRule for DecodeRule {
    fn thresholds(&self, gains: &mut [f64], out: &mut Vec<f64>) {
        let start = out.len();
        self.tangent_rates(gains, out);
        let mut best = f64::NEG_INFINITY;
        for v in out[start..].iter_mut().rev() {
            best = best.max(*v);
            *v = best;
        }
    }
}

/// Transmission probabilities searched for the best `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrid {
    values: Vec<f64>,
    refine_step: Option<f64>,
}

impl Default for ThetaGrid {
    fn default() -> Self {
        ThetaGrid { values: (1..=20).map(|i| i as f64 * 0.05).collect(), refine_step: Some(0.01) }
    }
}

impl ThetaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("theta_grid", "must not be empty"));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::invalid("theta_grid", format!("{v} is outside (0, 1]")));
        }
        Ok(ThetaGrid { values, refine_step: None })
    }

    /// After the grid search, also tries `best ± k·step` for `k = 1..=4`.
    pub fn with_refinement(mut self, step: f64) -> Self {
        self.refine_step = Some(step);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn argmax(&self, mut objective: impl FnMut(f64) -> f64) -> (f64, f64) {
        let mut best = (self.values[0], f64::NEG_INFINITY);
        for &theta in &self.values {
            let v = objective(theta);
            if v > best.1 {
                best = (theta, v);
            }
        }
        if let Some(step) = self.refine_step {
            let centre = best.0;
            for k in [-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0] {
                let theta = centre + k * step;
                if theta > 1e-9 && theta <= 1.0 + 1e-9 {
                    let theta = theta.min(1.0);
                    let v = objective(theta);
                    if v > best.1 {
                        best = (theta, v);
                    }
                }
            }
        }
        best
    }
}

/// Largest subband count tried by default.
pub const MAX_SUBBANDS: usize = 1 << 20;

/// Default subband counts for aloha-FDMA: every count up to 64, then 2%
/// steps to [`MAX_SUBBANDS`], so heavy loads can spread over many subbands.
pub fn default_subband_grid() -> Vec<usize> {
    let mut grid: Vec<usize> = (1..=64).collect();
    let mut b = 64.0f64;
    while b < MAX_SUBBANDS as f64 {
        b *= 1.02;
        let next = (b.round() as usize).min(MAX_SUBBANDS);
        if next > *grid.last().expect("non-empty") {
            grid.push(next);
        }
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Direct Monte Carlo `E[max |L|]` with `Pois(x_minislot·Θ)` transmitters.
pub fn expected_successes(
    x_minislot: f64,
    theta: f64,
    mu: ReferenceSnr<f64>,
    rate_minislot: f64,
    model: &GainModel,
    mc: &McConfig,
) -> Result<McEstimate> {
    if !(x_minislot > 0.0) {
        return Err(Error::invalid("x_minislot", "must be positive"));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::invalid("theta", "must lie in (0, 1]"));
    }
    mc.validate()?;
    model.validate()?;
    let mean = x_minislot * theta;
    let weights = PoissonWeights::new(mean, Some(mc.truncation(mean)));
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut gains = Vec::new();
    for i in 0..mc.realizations {
        let mut rng = stream_rng(mc.seed, i as u64);
        let omega = weights.quantile(rng.random());
        gains.clear();
        gains.extend((0..omega).map(|_| model.sample_gain(&mut rng)));
        let decoded = max_decodable_set(&gains, mu, rate_minislot).decoded_count as f64;
        sum += decoded;
        sum_sq += decoded * decoded;
    }
    let n = mc.realizations as f64;
    let m = sum / n;
    Ok(McEstimate { mean: m, stderr: ((sum_sq / n - m * m).max(0.0) / n).sqrt() })
}

/// Optimal uncoordinated outage `1 − max_Θ E[max |L|] / x̄` with
/// `x̄ = x·τ_m`, evaluated from a stratified profile.
pub struct OptimalOutage {
    profile: ThresholdProfile<DecodeRule>,
    backoff: BackoffConfig,
    theta_grid: ThetaGrid,
    truncation: Option<usize>,
    user_budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalPoint {
    pub epsilon: f64,
    pub stderr: f64,
    pub theta: f64,
}

impl OptimalOutage {
    pub fn new(mu: ReferenceSnr<f64>, backoff: BackoffConfig, model: GainModel, mc: &McConfig) -> Self {
        OptimalOutage {
            profile: ThresholdProfile::new(DecodeRule { mu: mu.linear() }, model, mc),
            backoff,
            theta_grid: ThetaGrid::default(),
            truncation: mc.poisson_truncation,
            user_budget: mc.realizations,
        }
    }

    pub fn with_theta_grid(mut self, grid: ThetaGrid) -> Self {
        self.theta_grid = grid;
        self
    }

    pub fn backoff(&self) -> &BackoffConfig {
        &self.backoff
    }

    /// `E[max |L|] / x̄` at a fixed `Θ`.
    pub fn success_fraction(&self, x: f64, rate: f64, theta: f64) -> f64 {
        let x_bar = x * self.backoff.minislot_duration_s;
        let rate_minislot = rate * self.backoff.minislots_per_slot as f64;
        self.profile.poisson_mean_served(x_bar * theta, rate_minislot, self.truncation) / x_bar
    }

    pub fn estimate(&self, x: f64, rate: f64) -> OptimalPoint {
        let x_bar = x * self.backoff.minislot_duration_s;
        let rate_minislot = rate * self.backoff.minislots_per_slot as f64;
        // Stratum means do not depend on Θ; share them across the search.
        let mut served: HashMap<usize, f64> = HashMap::new();
        let (theta, success) = self.theta_grid.argmax(|theta| {
            let weights = PoissonWeights::new(x_bar * theta, self.truncation);
            poisson_mix(&weights, |n| *served.entry(n).or_insert_with(|| self.profile.mean_served(n, rate_minislot))) / x_bar
        });
        let epsilon = (1.0 - success).clamp(0.0, 1.0);
        let mean = x * self.backoff.minislot_duration_s * theta;
        let stderr = (epsilon * (1.0 - epsilon) * poisson_spread(mean, self.truncation) / self.user_budget as f64).sqrt();
        OptimalPoint { epsilon, stderr, theta }
    }
}

impl OutageFunction<f64> for OptimalOutage {
    fn outage(&self, arrival_rate: f64, rate: f64) -> f64 {
        self.estimate(arrival_rate, rate).epsilon
    }
}

/// Aloha-FDMA outage `1 − max_B e^{−x̄/B}·P[g >= (2^{B R_m} − 1)/(B μ)]`.
pub struct AlohaOutage {
    gains: GainDistribution,
    mu: f64,
    backoff: BackoffConfig,
    subbands: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlohaPoint {
    pub epsilon: f64,
    pub stderr: f64,
    pub subbands: usize,
}

impl AlohaOutage {
    pub fn new(mu: ReferenceSnr<f64>, backoff: BackoffConfig, gains: GainDistribution) -> Self {
        AlohaOutage { gains, mu: mu.linear(), backoff, subbands: default_subband_grid() }
    }

    pub fn with_subbands(mut self, subbands: Vec<usize>) -> Result<Self> {
        if subbands.is_empty() || subbands.contains(&0) {
            return Err(Error::invalid("subbands", "need at least one positive subband count"));
        }
        self.subbands = subbands;
        Ok(self)
    }

    pub fn backoff(&self) -> &BackoffConfig {
        &self.backoff
    }

    /// `P[g >= (2^{B R_m} − 1)/(B μ)]`.
    pub fn channel_success(&self, rate: f64, subbands: usize) -> f64 {
        let b = subbands as f64;
        let rate_minislot = rate * self.backoff.minislots_per_slot as f64;
        let threshold = (b * rate_minislot * std::f64::consts::LN_2).exp_m1() / (b * self.mu);
        self.gains.ccdf(threshold).expect("non-empty distribution")
    }

    /// Success probability per transmitter with `B` subbands.
    pub fn success(&self, x: f64, rate: f64, subbands: usize) -> f64 {
        let x_bar = x * self.backoff.minislot_duration_s;
        (-x_bar / subbands as f64).exp() * self.channel_success(rate, subbands)
    }

    pub fn estimate(&self, x: f64, rate: f64) -> AlohaPoint {
        let mut best = (self.subbands[0], f64::NEG_INFINITY);
        for &b in &self.subbands {
            let s = self.success(x, rate, b);
            if s > best.1 {
                best = (b, s);
            }
        }
        let bin = (-x * self.backoff.minislot_duration_s / best.0 as f64).exp();
        let ccdf = self.channel_success(rate, best.0);
        AlohaPoint {
            epsilon: (1.0 - best.1).clamp(0.0, 1.0),
            stderr: bin * binomial_stderr(ccdf, self.gains.count() as f64),
            subbands: best.0,
        }
    }
}

impl OutageFunction<f64> for AlohaOutage {
    fn outage(&self, arrival_rate: f64, rate: f64) -> f64 {
        self.estimate(arrival_rate, rate).epsilon
    }
}

/// One-off uncoordinated outage at aggregate attempt rate `x`.
#[allow(clippy::too_many_arguments)]
pub fn outage_uncoordinated(
    x: f64,
    mu: ReferenceSnr<f64>,
    rate: f64,
    backoff: &BackoffConfig,
    strategy: UncoordinatedStrategy,
    subbands: &[usize],
    theta_grid: &ThetaGrid,
    model: &GainModel,
    mc: &McConfig,
) -> Result<OutageEstimate> {
    if !(x > 0.0) {
        return Err(Error::invalid("x", "must be positive"));
    }
    if !(rate > 0.0) {
        return Err(Error::invalid("rate", "must be positive"));
    }
    backoff.validate()?;
    model.validate()?;
    mc.validate()?;
    Ok(match strategy {
        UncoordinatedStrategy::Optimal => {
            let p = OptimalOutage::new(mu, *backoff, *model, mc).with_theta_grid(theta_grid.clone()).estimate(x, rate);
            OutageEstimate { epsilon: p.epsilon, stderr: p.stderr }
        }
        UncoordinatedStrategy::AlohaFdma => {
            let dist = GainDistribution::build(model, mc.realizations, mc.seed)?;
            let p = AlohaOutage::new(mu, *backoff, dist).with_subbands(subbands.to_vec())?.estimate(x, rate);
            OutageEstimate { epsilon: p.epsilon, stderr: p.stderr }
        }
    })
}
