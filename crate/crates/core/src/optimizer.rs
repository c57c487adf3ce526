//! Throughput maximization over the common rate for every access strategy.

use rayon::prelude::*;

use crate::channel_model::{GainDistribution, GainModel, ReferenceSnr};
use crate::coordinated::{CoordinatedOutage, CoordinatedStrategy};
use crate::error::{Error, Result};
use crate::mc::{McConfig, OutageEstimate};
use crate::retransmission::{effective_arrival_rate, BackoffConfig, FixedPointConfig, OutageFunction};
use crate::uncoordinated::{AlohaOutage, OptimalOutage, UncoordinatedStrategy};

/// Points added between the best grid point's neighbours.
const REFINE_POINTS: usize = 16;
/// Iteration cap for sweeps. Rates where the low and high fixed points are
/// about to merge converge linearly with a ratio near one and need a few
/// hundred iterations.
const SWEEP_MAX_ITERATIONS: usize = 5_000;

fn sweep_fixed_point() -> FixedPointConfig {
    FixedPointConfig { max_iterations: SWEEP_MAX_ITERATIONS, ..FixedPointConfig::default() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessStrategy {
    CoordinatedOptimal,
    CoordinatedFdma,
    UncoordinatedOptimal,
    AlohaFdma,
}

impl AccessStrategy {
    pub const ALL: [AccessStrategy; 4] = [
        AccessStrategy::CoordinatedOptimal,
        AccessStrategy::CoordinatedFdma,
        AccessStrategy::UncoordinatedOptimal,
        AccessStrategy::AlohaFdma,
    ];

    pub fn is_coordinated(self) -> bool {
        matches!(self, AccessStrategy::CoordinatedOptimal | AccessStrategy::CoordinatedFdma)
    }

    pub fn name(self) -> &'static str {
        match self {
            AccessStrategy::CoordinatedOptimal => "coordinated-optimal",
            AccessStrategy::CoordinatedFdma => "coordinated-fdma",
            AccessStrategy::UncoordinatedOptimal => "uncoordinated-optimal",
            AccessStrategy::AlohaFdma => "aloha-fdma",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl From<CoordinatedStrategy> for AccessStrategy {
    fn from(s: CoordinatedStrategy) -> Self {
        match s {
            CoordinatedStrategy::Optimal => AccessStrategy::CoordinatedOptimal,
            CoordinatedStrategy::Fdma => AccessStrategy::CoordinatedFdma,
        }
    }
}

impl From<UncoordinatedStrategy> for AccessStrategy {
    fn from(s: UncoordinatedStrategy) -> Self {
        match s {
            UncoordinatedStrategy::Optimal => AccessStrategy::UncoordinatedOptimal,
            UncoordinatedStrategy::AlohaFdma => AccessStrategy::AlohaFdma,
        }
    }
}

/// Candidate common rates, bps/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct RateGrid {
    values: Vec<f64>,
    refine: bool,
}

impl Default for RateGrid {
    fn default() -> Self {
        RateGrid::logarithmic(1e-4, 10.0, 250).expect("valid default grid")
    }
}

impl RateGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("rate_grid", "must not be empty"));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("rate_grid", "rates must be positive and finite"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("rate_grid", "rates must be strictly increasing"));
        }
        Ok(RateGrid { values, refine: true })
    }

    /// `points` log-spaced rates from `lo` to `hi` inclusive.
    pub fn logarithmic(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || points < 2 {
            return Err(Error::invalid("rate_grid", "need 0 < lo < hi and at least two points"));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let last = points - 1;
        let values = (0..points).map(|i| match i {
            0 => lo,
            i if i == last => hi,
            i => (a + (b - a) * i as f64 / last as f64).exp(),
        });
        Self::new(values.collect())
    }

    pub fn without_refinement(mut self) -> Self {
        self.refine = false;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Log-spaced rates strictly between the neighbours of `values[index]`.
    fn refinement_around(&self, index: usize) -> Vec<f64> {
        let lo = self.values[index.saturating_sub(1)];
        let hi = self.values[(index + 1).min(self.values.len() - 1)];
        if hi <= lo {
            return Vec::new();
        }
        let (a, b) = (lo.ln(), hi.ln());
        (1..=REFINE_POINTS).map(|i| (a + (b - a) * i as f64 / (REFINE_POINTS + 1) as f64).exp()).collect()
    }
}

/// Operating point at one common rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputPoint {
    pub rate: f64,
    /// Per-attempt outage.
    pub epsilon: f64,
    /// Packet failure probability; equals `epsilon` without retransmissions.
    pub delta: f64,
    /// Aggregate attempt rate, arrivals/s.
    pub x: f64,
    /// `λ R (1 − δ)`, bps/Hz.
    pub throughput: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constrained {
    Feasible(ThroughputPoint),
    /// No grid rate meets the constraint.
    Infeasible { min_failure: f64 },
}

impl Constrained {
    pub fn point(&self) -> Option<&ThroughputPoint> {
        match self {
            Constrained::Feasible(p) => Some(p),
            Constrained::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxThroughput {
    pub constrained: Constrained,
    pub unconstrained: ThroughputPoint,
}

enum Outage {
    Coordinated(CoordinatedOutage),
    Optimal(OptimalOutage),
    Aloha(AlohaOutage),
    Custom(Box<dyn OutageFunction<f64> + Send + Sync>),
}

impl OutageFunction<f64> for Outage {
    fn outage(&self, arrival_rate: f64, rate: f64) -> f64 {
        match self {
            Outage::Coordinated(o) => o.outage(arrival_rate, rate),
            Outage::Optimal(o) => o.outage(arrival_rate, rate),
            Outage::Aloha(o) => o.outage(arrival_rate, rate),
            Outage::Custom(o) => o.outage(arrival_rate, rate),
        }
    }
}

/// One strategy under one retransmission case, with its outage function
/// built once and shared by every evaluation.
pub struct StrategyModel {
    strategy: AccessStrategy,
    backoff: BackoffConfig,
    outage: Outage,
    fixed_point: FixedPointConfig,
}

impl StrategyModel {
    /// Coordinated strategies use only the slot duration of `backoff`.
    pub fn new(
        strategy: AccessStrategy,
        backoff: BackoffConfig,
        mu: ReferenceSnr<f64>,
        model: GainModel,
        mc: &McConfig,
    ) -> Result<Self> {
        backoff.validate()?;
        model.validate()?;
        mc.validate()?;
        let outage = match strategy {
            AccessStrategy::CoordinatedOptimal | AccessStrategy::CoordinatedFdma => {
                let s = if strategy == AccessStrategy::CoordinatedOptimal {
                    CoordinatedStrategy::Optimal
                } else {
                    CoordinatedStrategy::Fdma
                };
                Outage::Coordinated(CoordinatedOutage::new(s, mu, model, mc).with_slot_duration(backoff.slot_duration_s()))
            }
            AccessStrategy::UncoordinatedOptimal => Outage::Optimal(OptimalOutage::new(mu, backoff, model, mc)),
            AccessStrategy::AlohaFdma => {
                let dist = GainDistribution::build(&model, mc.realizations, mc.seed)?;
                Outage::Aloha(AlohaOutage::new(mu, backoff, dist))
            }
        };
        Ok(StrategyModel { strategy, backoff, outage, fixed_point: sweep_fixed_point() })
    }

    /// A strategy model around any outage function.
    pub fn with_outage(
        strategy: AccessStrategy,
        backoff: BackoffConfig,
        outage: impl OutageFunction<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        backoff.validate()?;
        Ok(StrategyModel { strategy, backoff, outage: Outage::Custom(Box::new(outage)), fixed_point: sweep_fixed_point() })
    }

    pub fn with_fixed_point(mut self, fp: FixedPointConfig) -> Self {
        self.fixed_point = fp;
        self
    }

    pub fn strategy(&self) -> AccessStrategy {
        self.strategy
    }

    pub fn backoff(&self) -> &BackoffConfig {
        &self.backoff
    }

    /// Per-attempt outage at aggregate rate `x`.
    pub fn outage(&self, x: f64, rate: f64) -> f64 {
        self.outage.outage(x, rate)
    }

    /// Per-attempt outage with its Monte Carlo standard error; zero error
    /// for closed-form outage functions.
    pub fn outage_estimate(&self, x: f64, rate: f64) -> OutageEstimate {
        match &self.outage {
            Outage::Coordinated(o) => o.estimate(x, rate),
            Outage::Optimal(o) => {
                let p = o.estimate(x, rate);
                OutageEstimate { epsilon: p.epsilon, stderr: p.stderr }
            }
            Outage::Aloha(o) => {
                let p = o.estimate(x, rate);
                OutageEstimate { epsilon: p.epsilon, stderr: p.stderr }
            }
            Outage::Custom(o) => OutageEstimate { epsilon: o.outage(x, rate), stderr: 0.0 },
        }
    }

    /// Coordinated: `ε(λ, R)`. Uncoordinated: the fixed point `x`, then
    /// `ε(x, R)` and `δ(ε)`.
    pub fn solve_chain(&self, rate: f64, lambda: f64) -> Result<ThroughputPoint> {
        if !(rate > 0.0) {
            return Err(Error::invalid("rate", "must be positive"));
        }
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if self.strategy.is_coordinated() {
            let epsilon = self.outage.outage(lambda, rate);
            return Ok(ThroughputPoint {
                rate,
                epsilon,
                delta: epsilon,
                x: lambda,
                throughput: lambda * rate * (1.0 - epsilon),
            });
        }
        let eq = effective_arrival_rate(lambda, &self.outage, rate, &self.backoff, &self.fixed_point)?;
        Ok(ThroughputPoint {
            rate,
            epsilon: eq.epsilon,
            delta: eq.delta,
            x: eq.x,
            throughput: lambda * rate * (1.0 - eq.delta),
        })
    }

    /// Best throughput over `grid` with failure probability at most
    /// `constraint` (outage for coordinated strategies), plus the
    /// unconstrained best. Ties go to the larger rate.
    pub fn max_throughput(&self, lambda: f64, constraint: f64, grid: &RateGrid) -> Result<MaxThroughput> {
        if !(constraint > 0.0 && constraint <= 1.0) {
            return Err(Error::invalid("constraint", "must lie in (0, 1]"));
        }
        let points = self.sweep(lambda, grid.values())?;
        let feasible = |p: &ThroughputPoint| p.delta <= constraint;
        let best_index = |pts: &[ThroughputPoint], ok: &dyn Fn(&ThroughputPoint) -> bool| -> Option<usize> {
            let mut best: Option<usize> = None;
            for (i, p) in pts.iter().enumerate() {
                if ok(p) && best.is_none_or(|b| p.throughput >= pts[b].throughput) {
                    best = Some(i);
                }
            }
            best
        };
        let refine = |index: usize, ok: &dyn Fn(&ThroughputPoint) -> bool| -> Result<ThroughputPoint> {
            let mut best = points[index];
            if grid.refine {
                for p in self.sweep(lambda, &grid.refinement_around(index))? {
                    if ok(&p) && (p.throughput > best.throughput || (p.throughput == best.throughput && p.rate > best.rate)) {
                        best = p;
                    }
                }
            }
            Ok(best)
        };
        let any = |_: &ThroughputPoint| true;
        let unconstrained = refine(best_index(&points, &any).expect("grid is not empty"), &any)?;
        let constrained = match best_index(&points, &feasible) {
            Some(i) => Constrained::Feasible(refine(i, &feasible)?),
            None => Constrained::Infeasible {
                min_failure: points.iter().map(|p| p.delta).fold(f64::INFINITY, f64::min),
            },
        };
        Ok(MaxThroughput { constrained, unconstrained })
    }

    /// Throughput points at every rate, evaluated in parallel.
    pub fn sweep(&self, lambda: f64, rates: &[f64]) -> Result<Vec<ThroughputPoint>> {
        rates.par_iter().map(|&r| self.solve_chain(r, lambda)).collect()
    }
}

/// One-off chain evaluation.
pub fn solve_chain(
    rate: f64,
    lambda: f64,
    mu: ReferenceSnr<f64>,
    backoff: &BackoffConfig,
    strategy: AccessStrategy,
    model: &GainModel,
    mc: &McConfig,
) -> Result<ThroughputPoint> {
    StrategyModel::new(strategy, *backoff, mu, *model, mc)?.solve_chain(rate, lambda)
}

/// One-off constrained maximization.
#[allow(clippy::too_many_arguments)]
pub fn max_throughput(
    lambda: f64,
    mu: ReferenceSnr<f64>,
    constraint: f64,
    backoff: &BackoffConfig,
    strategy: AccessStrategy,
    grid: &RateGrid,
    model: &GainModel,
    mc: &McConfig,
) -> Result<MaxThroughput> {
    StrategyModel::new(strategy, *backoff, mu, *model, mc)?.max_throughput(lambda, constraint, grid)
}
