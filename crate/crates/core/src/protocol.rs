//! One-stage (payload over random access) versus two-stage (random-access
//! identification, then scheduled payload) protocol capacity.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::channel_model::{GainModel, ReferenceSnr};
use crate::coordinated::CoordinatedStrategy;
use crate::error::{Error, Result};
use crate::mc::{stream_rng, McConfig};
use crate::optimizer::{AccessStrategy, RateGrid, StrategyModel};
use crate::real::Real;
use crate::retransmission::BackoffConfig;
use crate::uncoordinated::UncoordinatedStrategy;

/// Users per downlink batch when checking harmonic against arithmetic means.
const DOWNLINK_BATCH: usize = 4096;
/// Bisection steps when refining a supportable arrival rate.
const BISECTION_STEPS: usize = 8;

/// Signalling sizes in bits plus the shared resource budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolOverheads<T> {
    /// Identity carried with a one-stage uplink payload.
    pub one_stage_id_bits: T,
    /// One-stage downlink acknowledgement.
    pub one_stage_ack_bits: T,
    /// Two-stage random-access request.
    pub rach_bits: T,
    /// Two-stage downlink scheduling grant.
    pub grant_bits: T,
    pub bandwidth_hz: T,
    /// Latency budget, seconds.
    pub latency_s: T,
}

impl<T: Real> Default for ProtocolOverheads<T> {
    fn default() -> Self {
        ProtocolOverheads {
            one_stage_id_bits: T::of(20.0),
            one_stage_ack_bits: T::of(20.0),
            rach_bits: T::of(20.0),
            grant_bits: T::of(64.0),
            bandwidth_hz: T::of(1e4),
            latency_s: T::one(),
        }
    }
}

impl<T: Real> ProtocolOverheads<T> {
    pub fn validate(&self) -> Result<()> {
        let bits = [
            ("one_stage_id_bits", self.one_stage_id_bits),
            ("one_stage_ack_bits", self.one_stage_ack_bits),
            ("rach_bits", self.rach_bits),
            ("grant_bits", self.grant_bits),
        ];
        for (name, v) in bits {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        if !(self.bandwidth_hz > T::zero()) || !self.bandwidth_hz.is_finite() {
            return Err(Error::invalid("bandwidth_hz", "must be positive"));
        }
        if !(self.latency_s > T::zero()) || !self.latency_s.is_finite() {
            return Err(Error::invalid("latency_s", "must be positive"));
        }
        Ok(())
    }

    /// Resource budget per arrival, Hz·s.
    fn budget_per_user(&self, lambda: T) -> T {
        self.bandwidth_hz * self.latency_s / lambda
    }
}

/// `[S_U (W T/λ − L_ack/S_D) − L_id]⁺`.
pub fn one_stage_max_payload<T: Real>(
    lambda: T,
    uplink_throughput: T,
    downlink_efficiency: T,
    overheads: &ProtocolOverheads<T>,
) -> T {
    let ack = if overheads.one_stage_ack_bits > T::zero() {
        overheads.one_stage_ack_bits / downlink_efficiency
    } else {
        T::zero()
    };
    let bound = uplink_throughput * (overheads.budget_per_user(lambda) - ack) - overheads.one_stage_id_bits;
    if bound > T::zero() {
        bound
    } else {
        T::zero()
    }
}

/// `[S_U2 (W T/λ − L_rach/S_U1 − L_grant/S_D)]⁺`.
pub fn two_stage_max_payload<T: Real>(
    lambda: T,
    rach_throughput: T,
    downlink_efficiency: T,
    scheduled_throughput: T,
    overheads: &ProtocolOverheads<T>,
) -> T {
    let per_bits = |bits: T, efficiency: T| if bits > T::zero() { bits / efficiency } else { T::zero() };
    let left = overheads.budget_per_user(lambda)
        - per_bits(overheads.rach_bits, rach_throughput)
        - per_bits(overheads.grant_bits, downlink_efficiency);
    let bound = scheduled_throughput * left;
    if left > T::zero() && bound > T::zero() {
        bound
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DownlinkEfficiency {
    /// `K / Σ_k 1/log2(1 + μ_k)`.
    pub harmonic: f64,
    pub arithmetic: f64,
    /// Batches whose harmonic mean exceeded their arithmetic mean (always 0).
    pub violating_batches: usize,
}

/// Harmonic mean of `log2(1 + μ_dl·g)` over users dropped per `model`.
/// Fading should be averaged (see [`crate::channel_model::Fading`]) or the
/// harmonic mean collapses towards zero.
pub fn downlink_spectral_efficiency(mu_dl: ReferenceSnr<f64>, model: &GainModel, mc: &McConfig) -> Result<DownlinkEfficiency> {
    mc.validate()?;
    model.validate()?;
    let mu = mu_dl.linear();
    let (mut inv_sum, mut sum, mut violating) = (0.0, 0.0, 0usize);
    let mut done = 0;
    let mut batch = 0u64;
    while done < mc.realizations {
        let size = DOWNLINK_BATCH.min(mc.realizations - done);
        let mut rng = stream_rng(mc.seed, batch);
        let (mut b_inv, mut b_sum) = (0.0, 0.0);
        for _ in 0..size {
            let rate = (mu * model.sample_gain(&mut rng)).ln_1p() / std::f64::consts::LN_2;
            b_inv += 1.0 / rate;
            b_sum += rate;
        }
        if size as f64 / b_inv > b_sum / size as f64 * (1.0 + 1e-12) {
            violating += 1;
        }
        inv_sum += b_inv;
        sum += b_sum;
        done += size;
        batch += 1;
    }
    let n = mc.realizations as f64;
    Ok(DownlinkEfficiency { harmonic: n / inv_sum, arithmetic: sum / n, violating_batches: violating })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    OneStage,
    TwoStage,
}

/// Access strategies used by each protocol stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySelection {
    pub one_stage_uplink: UncoordinatedStrategy,
    pub two_stage_first: UncoordinatedStrategy,
    pub two_stage_second: CoordinatedStrategy,
}

impl Default for StrategySelection {
    fn default() -> Self {
        StrategySelection {
            one_stage_uplink: UncoordinatedStrategy::Optimal,
            two_stage_first: UncoordinatedStrategy::AlohaFdma,
            two_stage_second: CoordinatedStrategy::Optimal,
        }
    }
}

impl StrategySelection {
    pub fn one_stage(uplink: UncoordinatedStrategy) -> Self {
        StrategySelection { one_stage_uplink: uplink, ..Default::default() }
    }

    pub fn two_stage(second: CoordinatedStrategy) -> Self {
        StrategySelection { two_stage_second: second, ..Default::default() }
    }
}

/// Retransmission cases for the random-access stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageCases {
    pub uncoordinated_optimal: BackoffConfig,
    pub aloha: BackoffConfig,
}

impl Default for StageCases {
    fn default() -> Self {
        StageCases { uncoordinated_optimal: BackoffConfig::one_tx(), aloha: BackoffConfig::four_tx() }
    }
}

/// Log-spaced arrival rates `2^lo ..= 2^hi` with `per_octave` points per doubling.
pub fn lambda_grid(lo: i32, hi: i32, per_octave: usize) -> Vec<f64> {
    let steps = (hi - lo) as usize * per_octave;
    (0..=steps).map(|i| 2f64.powf(lo as f64 + i as f64 / per_octave as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportedRate {
    /// Largest arrival rate whose payload bound reaches the target.
    Rate(f64),
    /// The target is met everywhere on the grid.
    AtCeiling(f64),
    /// Not even the smallest grid rate carries the payload.
    Zero,
}

impl SupportedRate {
    pub fn value(self) -> f64 {
        match self {
            SupportedRate::Rate(l) | SupportedRate::AtCeiling(l) => l,
            SupportedRate::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossover {
    /// Payload (bits) at which the two curves swap order.
    At(f64),
    NoCrossover,
}

/// Payload bounds and supportable arrival rates, with constrained maximum
/// throughputs cached per strategy and arrival rate.
pub struct CapacityAnalysis {
    overheads: ProtocolOverheads<f64>,
    downlink: f64,
    constraint: f64,
    grid: RateGrid,
    lambdas: Vec<f64>,
    uncoordinated_optimal: StrategyModel,
    aloha: StrategyModel,
    coordinated_optimal: StrategyModel,
    coordinated_fdma: StrategyModel,
    cache: Mutex<HashMap<(AccessStrategy, u64), f64>>,
}

impl CapacityAnalysis {
    /// `downlink` is the downlink spectral efficiency in bps/Hz.
    pub fn new(
        mu: ReferenceSnr<f64>,
        model: GainModel,
        downlink: f64,
        overheads: ProtocolOverheads<f64>,
        cases: StageCases,
        mc: &McConfig,
    ) -> Result<Self> {
        overheads.validate()?;
        if !(downlink > 0.0) {
            return Err(Error::invalid("downlink", "must be positive"));
        }
        let one_slot = BackoffConfig::with_slot_duration(1, 1, 1, overheads.latency_s)?;
        Ok(CapacityAnalysis {
            overheads,
            downlink,
            constraint: 0.1,
            grid: RateGrid::default(),
            lambdas: lambda_grid(-4, 10, 4),
            uncoordinated_optimal: StrategyModel::new(AccessStrategy::UncoordinatedOptimal, cases.uncoordinated_optimal, mu, model, mc)?,
            aloha: StrategyModel::new(AccessStrategy::AlohaFdma, cases.aloha, mu, model, mc)?,
            coordinated_optimal: StrategyModel::new(AccessStrategy::CoordinatedOptimal, one_slot, mu, model, mc)?,
            coordinated_fdma: StrategyModel::new(AccessStrategy::CoordinatedFdma, one_slot, mu, model, mc)?,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_constraint(mut self, constraint: f64) -> Result<Self> {
        if !(constraint > 0.0 && constraint <= 1.0) {
            return Err(Error::invalid("constraint", "must lie in (0, 1]"));
        }
        self.constraint = constraint;
        Ok(self)
    }

    pub fn with_rate_grid(mut self, grid: RateGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_lambda_grid(mut self, lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) || lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("lambda_grid", "must be non-empty, positive and increasing"));
        }
        self.lambdas = lambdas;
        Ok(self)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn downlink(&self) -> f64 {
        self.downlink
    }

    fn model(&self, strategy: AccessStrategy) -> &StrategyModel {
        match strategy {
            AccessStrategy::UncoordinatedOptimal => &self.uncoordinated_optimal,
            AccessStrategy::AlohaFdma => &self.aloha,
            AccessStrategy::CoordinatedOptimal => &self.coordinated_optimal,
            AccessStrategy::CoordinatedFdma => &self.coordinated_fdma,
        }
    }

    /// Constrained maximum throughput (bps/Hz); zero when infeasible.
    pub fn throughput(&self, strategy: AccessStrategy, lambda: f64) -> Result<f64> {
        let key = (strategy, lambda.to_bits());
        if let Some(&s) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(s);
        }
        let best = self.model(strategy).max_throughput(lambda, self.constraint, &self.grid)?;
        let s = best.constrained.point().map_or(0.0, |p| p.throughput);
        self.cache.lock().expect("cache lock").insert(key, s);
        Ok(s)
    }

    pub fn max_payload(&self, protocol: Protocol, selection: &StrategySelection, lambda: f64) -> Result<f64> {
        match protocol {
            Protocol::OneStage => {
                let s = self.throughput(selection.one_stage_uplink.into(), lambda)?;
                Ok(one_stage_max_payload(lambda, s, self.downlink, &self.overheads))
            }
            Protocol::TwoStage => {
                let o = &self.overheads;
                // Skip the scheduled stage once the grant alone exhausts the budget.
                if o.budget_per_user(lambda) <= o.grant_bits / self.downlink {
                    return Ok(0.0);
                }
                let rach = self.throughput(selection.two_stage_first.into(), lambda)?;
                if !(rach > 0.0) {
                    return Ok(0.0);
                }
                let scheduled = self.throughput(selection.two_stage_second.into(), lambda)?;
                Ok(two_stage_max_payload(lambda, rach, self.downlink, scheduled, o))
            }
        }
    }

    /// Payload bound at every grid arrival rate.
    pub fn payload_curve(&self, protocol: Protocol, selection: &StrategySelection) -> Result<Vec<f64>> {
        self.lambdas.iter().map(|&l| self.max_payload(protocol, selection, l)).collect()
    }

    /// Largest arrival rate whose payload bound reaches `payload_bits`: the
    /// last grid point that does, refined by bisection in `log λ` towards
    /// the next one.
    pub fn max_arrival_rate(&self, payload_bits: f64, protocol: Protocol, selection: &StrategySelection) -> Result<SupportedRate> {
        if !(payload_bits > 0.0) {
            return Err(Error::invalid("payload_bits", "must be positive"));
        }
        let curve = self.payload_curve(protocol, selection)?;
        // Allow sampling noise, reject structural increases.
        for (i, w) in curve.windows(2).enumerate() {
            if w[1] > w[0] * 1.05 + 1e-9 {
                return Err(Error::invalid(
                    "payload_curve",
                    format!("increases from {} to {} bits between λ={} and λ={}", w[0], w[1], self.lambdas[i], self.lambdas[i + 1]),
                ));
            }
        }
        let Some(last) = curve.iter().rposition(|&l| l >= payload_bits) else {
            return Ok(SupportedRate::Zero);
        };
        if last + 1 == curve.len() {
            return Ok(SupportedRate::AtCeiling(self.lambdas[last]));
        }
        let (mut lo, mut hi) = (self.lambdas[last].ln(), self.lambdas[last + 1].ln());
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if self.max_payload(protocol, selection, mid.exp())? >= payload_bits {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(SupportedRate::Rate(lo.exp()))
    }

    /// Supportable arrival rate at every payload.
    pub fn capacity_curve(&self, payloads: &[f64], protocol: Protocol, selection: &StrategySelection) -> Result<Vec<f64>> {
        payloads.iter().map(|&l| self.max_arrival_rate(l, protocol, selection).map(SupportedRate::value)).collect()
    }
}

/// First payload where `a − b` changes sign, interpolated in `log L`.
pub fn crossover_payload(payloads: &[f64], a: &[f64], b: &[f64]) -> Result<Crossover> {
    if payloads.len() != a.len() || payloads.len() != b.len() {
        return Err(Error::invalid("payloads", "curves must share the payload grid"));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    for i in 1..diff.len() {
        let (d0, d1) = (diff[i - 1], diff[i]);
        if d0 != 0.0 && d1 != 0.0 && (d0 > 0.0) != (d1 > 0.0) {
            let (l0, l1) = (payloads[i - 1].ln(), payloads[i].ln());
            let t = d0 / (d0 - d1);
            return Ok(Crossover::At((l0 + t * (l1 - l0)).exp()));
        }
    }
    Ok(Crossover::NoCrossover)
}

/// `points` log-spaced payload sizes from `lo` to `hi` bits.
pub fn payload_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::{Fading, Placement};

    fn free() -> ProtocolOverheads<f64> {
        ProtocolOverheads { one_stage_id_bits: 0.0, one_stage_ack_bits: 0.0, rach_bits: 0.0, grant_bits: 0.0, ..Default::default() }
    }

    #[test]
    fn overhead_defaults_and_validation() {
        let o = ProtocolOverheads::<f64>::default();
        assert_eq!((o.one_stage_id_bits, o.one_stage_ack_bits, o.rach_bits, o.grant_bits), (20.0, 20.0, 20.0, 64.0));
        assert_eq!((o.bandwidth_hz, o.latency_s), (1e4, 1.0));
        assert!(o.validate().is_ok());
        assert!(ProtocolOverheads { grant_bits: -1.0, ..o }.validate().is_err());
        assert!(ProtocolOverheads { bandwidth_hz: 0.0, ..o }.validate().is_err());
    }

    #[test]
    fn one_stage_bounds() {
        assert_eq!(one_stage_max_payload(10.0, 2.0, 2.0, &free()), 2.0 * 1e4 / 10.0);
        let heavy = ProtocolOverheads { one_stage_id_bits: 1e9, ..Default::default() };
        assert_eq!(one_stage_max_payload(10.0, 2.0, 2.0, &heavy), 0.0);
        let o = ProtocolOverheads::<f64>::default();
        let expected = 3.0 * (1e4 / 16.0 - 20.0 / 2.0) - 20.0;
        assert!((one_stage_max_payload(16.0, 3.0, 2.0, &o) - expected).abs() < 1e-9);
        assert_eq!(one_stage_max_payload(1e6, 3.0, 2.0, &o), 0.0);
    }

    #[test]
    fn two_stage_bounds() {
        assert_eq!(two_stage_max_payload(10.0, f64::INFINITY, 2.0, 5.0, &free()), 5.0 * 1e3);
        let o = ProtocolOverheads::<f64>::default();
        assert_eq!(two_stage_max_payload(10.0, f64::INFINITY, 2.0, 5.0, &ProtocolOverheads { grant_bits: 0.0, ..o }), 5.0 * 1e3);
        // Random-access term alone exhausts the budget.
        assert_eq!(two_stage_max_payload(1000.0, 0.5, 2.0, 5.0, &o), 0.0);
        let expected = 5.0 * (1e4 / 16.0 - 20.0 / 0.5 - 64.0 / 2.0);
        assert!((two_stage_max_payload(16.0, 0.5, 2.0, 5.0, &o) - expected).abs() < 1e-9);
        assert_eq!(two_stage_max_payload(16.0f32, 0.5, 2.0, 5.0, &ProtocolOverheads::default()), expected as f32);
    }

    #[test]
    fn downlink_constant_and_homogeneous() {
        let pinned = GainModel::new(3.76, 0.0).with_placement(Placement::Pinned(1.0)).with_fading(Fading::Averaged);
        let mc = McConfig::new(10_000, 3).unwrap();
        let mu3 = ReferenceSnr::from_linear(3.0).unwrap();
        let d = downlink_spectral_efficiency(mu3, &pinned, &mc).unwrap();
        assert!((d.harmonic - 2.0).abs() < 1e-12);
        // Doubling every rate doubles the harmonic mean: 1 + μ' = (1 + μ)².
        let mu15 = ReferenceSnr::from_linear(15.0).unwrap();
        assert!((downlink_spectral_efficiency(mu15, &pinned, &mc).unwrap().harmonic - 4.0).abs() < 1e-12);
    }

    #[test]
    fn downlink_disk_harmonic_below_arithmetic() {
        let disk = GainModel::new(3.76, 0.0).with_fading(Fading::Averaged);
        let mc = McConfig::new(100_000, 4).unwrap();
        let d = downlink_spectral_efficiency(ReferenceSnr::from_linear(1.0).unwrap(), &disk, &mc).unwrap();
        assert_eq!(d.violating_batches, 0);
        assert!(d.harmonic < d.arithmetic);
        assert!(d.harmonic > 1.8 && d.harmonic < 2.3, "{d:?}");
    }

    #[test]
    fn lambda_and_payload_grids() {
        let g = lambda_grid(-4, 10, 4);
        assert_eq!(g.len(), 57);
        assert_eq!((g[0], g[56]), (0.0625, 1024.0));
        let p = payload_grid(1.0, 1e4, 41);
        assert!((p[10] - 10.0).abs() < 1e-9 && (p[40] - 1e4).abs() < 1e-6);
    }

    #[test]
    fn crossover_cases() {
        let l = [10.0, 100.0, 1000.0];
        assert_eq!(crossover_payload(&l, &[5.0, 3.0, 1.0], &[5.0, 3.0, 1.0]).unwrap(), Crossover::NoCrossover);
        match crossover_payload(&l, &[4.0, 3.0, 1.0], &[2.0, 2.0, 2.0]).unwrap() {
            Crossover::At(c) => assert!(c > 100.0 && c < 1000.0),
            c => panic!("{c:?}"),
        }
        match crossover_payload(&[10.0, 1000.0], &[2.0, 0.0], &[1.0, 1.0]).unwrap() {
            Crossover::At(c) => assert!((c - 100.0).abs() < 1e-9),
            c => panic!("{c:?}"),
        }
        assert!(crossover_payload(&l, &[1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    fn small_analysis() -> CapacityAnalysis {
        let model = GainModel::new(3.76, 0.0);
        let mc = McConfig::new(5_000, 5).unwrap();
        CapacityAnalysis::new(ReferenceSnr::from_linear(1.0).unwrap(), model, 2.07, ProtocolOverheads::default(), StageCases::default(), &mc)
            .unwrap()
            .with_rate_grid(RateGrid::logarithmic(1e-3, 10.0, 40).unwrap())
            .with_lambda_grid(lambda_grid(-2, 9, 1))
            .unwrap()
    }

    #[test]
    fn supportable_rate_is_monotone_in_payload() {
        let a = small_analysis();
        let sel = StrategySelection::one_stage(UncoordinatedStrategy::Optimal);
        let tiny = a.max_arrival_rate(1e-6, Protocol::OneStage, &sel).unwrap();
        assert!(matches!(tiny, SupportedRate::Rate(_) | SupportedRate::AtCeiling(_)));
        let payloads = payload_grid(10.0, 1e4, 7);
        let caps = a.capacity_curve(&payloads, Protocol::OneStage, &sel).unwrap();
        assert!(caps.windows(2).all(|w| w[1] <= w[0]), "{caps:?}");
        assert_eq!(a.max_arrival_rate(1e9, Protocol::TwoStage, &StrategySelection::default()).unwrap(), SupportedRate::Zero);
        assert!(a.max_arrival_rate(0.0, Protocol::OneStage, &sel).is_err());
    }

    #[test]
    fn payload_curves_never_negative() {
        let a = small_analysis();
        for (p, sel) in [
            (Protocol::OneStage, StrategySelection::one_stage(UncoordinatedStrategy::AlohaFdma)),
            (Protocol::TwoStage, StrategySelection::two_stage(CoordinatedStrategy::Fdma)),
        ] {
            let c = a.payload_curve(p, &sel).unwrap();
            assert!(c.iter().all(|&l| l >= 0.0));
            assert_eq!(*c.last().unwrap(), 0.0);
        }
    }
}
