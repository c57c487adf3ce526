//! Minislot-level simulation of random arrivals, uniform backoff, attempt
//! limits and deadlines.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::channel_model::{combine_gain, GainModel, ReferenceSnr};
use crate::error::{Error, Result};
use crate::mc::stream_rng;
use crate::retransmission::BackoffConfig;
use crate::uncoordinated::max_decodable_set;

pub const DEFAULT_HORIZON: u64 = 1_000_000;
pub const MIN_HORIZON: u64 = 10_000;
pub const DEFAULT_WARMUP: f64 = 0.1;
/// Fewer observed failures than this raises [`SimWarning::FewFailures`].
pub const MIN_FAILURES: u64 = 100;

/// How a packet's channel evolves between its attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelMemory {
    /// Fading is redrawn per attempt; placement and shadowing stay.
    #[default]
    RedrawFading,
    /// One gain per packet.
    Fixed,
    /// Every attempt sees a fresh gain.
    RedrawAll,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhysicalAccess {
    /// Each contender transmits with probability `theta`; the largest
    /// decodable set of transmitters succeeds.
    Optimal { theta: f64 },
    /// Each contender picks one of `subbands` at random; lone occupants
    /// with a strong enough channel succeed.
    AlohaFdma { subbands: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalModel {
    pub access: PhysicalAccess,
    pub mu: ReferenceSnr<f64>,
    /// Common rate `R`; a minislot carries `M·R`.
    pub rate: f64,
    pub gains: GainModel,
    pub memory: ChannelMemory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttemptModel {
    /// Every attempt fails independently with this probability.
    ConstantEpsilon(f64),
    /// Attempts contend in each minislot over actual channels.
    Physical(PhysicalModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// New packets per second.
    pub lambda: f64,
    pub horizon_minislots: u64,
    /// Fraction of the horizon discarded before measuring.
    pub warmup_fraction: f64,
    pub backoff: BackoffConfig,
    pub attempt_model: AttemptModel,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(lambda: f64, backoff: BackoffConfig, attempt_model: AttemptModel, seed: u64) -> Self {
        SimConfig {
            lambda,
            horizon_minislots: DEFAULT_HORIZON,
            warmup_fraction: DEFAULT_WARMUP,
            backoff,
            attempt_model,
            seed,
        }
    }

    pub fn with_horizon(mut self, minislots: u64) -> Self {
        self.horizon_minislots = minislots;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.backoff.validate()?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        if self.horizon_minislots < MIN_HORIZON {
            return Err(Error::invalid("horizon_minislots", format!("must be at least {MIN_HORIZON}")));
        }
        if !(0.0..0.9).contains(&self.warmup_fraction) {
            return Err(Error::invalid("warmup_fraction", "must lie in [0, 0.9)"));
        }
        match self.attempt_model {
            AttemptModel::ConstantEpsilon(e) if !(0.0..=1.0).contains(&e) => {
                Err(Error::invalid("epsilon", "must lie in [0, 1]"))
            }
            AttemptModel::Physical(p) => {
                p.gains.validate()?;
                if !(p.rate > 0.0) {
                    return Err(Error::invalid("rate", "must be positive"));
                }
                match p.access {
                    PhysicalAccess::Optimal { theta } if !(theta > 0.0 && theta <= 1.0) => {
                        Err(Error::invalid("theta", "must lie in (0, 1]"))
                    }
                    PhysicalAccess::AlohaFdma { subbands: 0 } => Err(Error::invalid("subbands", "must be at least 1")),
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    fn warmup(&self) -> u64 {
        (self.horizon_minislots as f64 * self.warmup_fraction).floor() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimWarning {
    /// Too few failures for a tight failure-probability estimate.
    FewFailures { observed: u64 },
}

/// Counts over packets that arrive in the measurement window, which starts
/// after the warmup and ends `M` minislots before the horizon so every
/// counted packet is resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub new_arrivals: u64,
    pub eventual_failures: u64,
    /// Attempts made by the counted packets.
    pub total_attempts: u64,
    /// `Σ attempts²` over the counted packets.
    pub attempts_sq_sum: u64,
    /// Attempts in every minislot of the measurement window.
    pub minislot_attempts: Vec<u32>,
    pub warning: Option<SimWarning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub stats: SimStats,
    pub delta_hat: f64,
    pub delta_stderr: f64,
    /// Attempts per second.
    pub x_hat: f64,
    pub x_stderr: f64,
    /// `λ R (1 − δ̂)` in bps/Hz; physical model only.
    pub throughput_hat: Option<f64>,
    pub throughput_stderr: Option<f64>,
}

impl SimReport {
    pub const CSV_HEADER: [&'static str; 10] = [
        "new_arrivals",
        "eventual_failures",
        "total_attempts",
        "delta_hat",
        "delta_stderr",
        "x_hat",
        "x_stderr",
        "throughput_hat",
        "throughput_stderr",
        "warning",
    ];

    /// One summary record aligned with [`SimReport::CSV_HEADER`].
    pub fn csv_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.9e}")).unwrap_or_default();
        vec![
            self.stats.new_arrivals.to_string(),
            self.stats.eventual_failures.to_string(),
            self.stats.total_attempts.to_string(),
            format!("{:.9e}", self.delta_hat),
            format!("{:.9e}", self.delta_stderr),
            format!("{:.9e}", self.x_hat),
            format!("{:.9e}", self.x_stderr),
            opt(self.throughput_hat),
            opt(self.throughput_stderr),
            match self.stats.warning {
                Some(SimWarning::FewFailures { .. }) => "few_failures".into(),
                None => String::new(),
            },
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    arrival: u64,
    attempts: u32,
    /// Large-scale gain or full gain, depending on [`ChannelMemory`].
    channel: f64,
}

struct Channel<'a> {
    model: &'a PhysicalModel,
    rate_minislot: f64,
    gains: Vec<f64>,
    transmitters: Vec<usize>,
    occupancy: Vec<u32>,
    choice: Vec<usize>,
}

impl<'a> Channel<'a> {
    fn new(model: &'a PhysicalModel, minislots: usize) -> Self {
        let occupancy = match model.access {
            PhysicalAccess::AlohaFdma { subbands } => vec![0; subbands],
            PhysicalAccess::Optimal { .. } => Vec::new(),
        };
        Channel {
            model,
            rate_minislot: model.rate * minislots as f64,
            gains: Vec::new(),
            transmitters: Vec::new(),
            occupancy,
            choice: Vec::new(),
        }
    }

    fn initial(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.model.memory {
            ChannelMemory::RedrawFading => self.model.gains.sample_large_scale(rng),
            ChannelMemory::Fixed => self.model.gains.sample_gain(rng),
            ChannelMemory::RedrawAll => 0.0,
        }
    }

    fn attempt_gain(&self, stored: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self.model.memory {
            ChannelMemory::RedrawFading => combine_gain(stored, self.model.gains.sample_fading(rng)),
            ChannelMemory::Fixed => stored,
            ChannelMemory::RedrawAll => self.model.gains.sample_gain(rng),
        }
    }

    /// Marks `success[i]` for each contender that gets through.
    fn resolve(&mut self, contenders: &[Packet], success: &mut Vec<bool>, rng: &mut ChaCha8Rng) {
        success.clear();
        success.resize(contenders.len(), false);
        match self.model.access {
            PhysicalAccess::Optimal { theta } => {
                self.gains.clear();
                self.transmitters.clear();
                for (i, p) in contenders.iter().enumerate() {
                    if theta >= 1.0 || rng.random::<f64>() < theta {
                        self.transmitters.push(i);
                        let g = self.attempt_gain(p.channel, rng);
                        self.gains.push(g);
                    }
                }
                let decoded = max_decodable_set(&self.gains, self.model.mu, self.rate_minislot);
                for j in decoded.decoded_set {
                    success[self.transmitters[j]] = true;
                }
            }
            PhysicalAccess::AlohaFdma { subbands } => {
                self.occupancy.iter_mut().for_each(|c| *c = 0);
                self.choice.clear();
                for _ in contenders {
                    let band = rng.random_range(0..subbands);
                    self.occupancy[band] += 1;
                    self.choice.push(band);
                }
                let b = subbands as f64;
                let mu = self.model.mu.linear();
                for (i, p) in contenders.iter().enumerate() {
                    if self.occupancy[self.choice[i]] == 1 {
                        let g = self.attempt_gain(p.channel, rng);
                        success[i] = (b * mu * g).ln_1p() / (b * std::f64::consts::LN_2) >= self.rate_minislot;
                    }
                }
            }
        }
    }
}

/// Runs one simulation. Packets attempt first in their arrival minislot,
/// then after uniform backoffs on `1..=T_w`; a packet fails once `Z`
/// attempts fail or its next attempt would fall after minislot
/// `arrival + M − 1`.
pub fn simulate(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let backoff = &cfg.backoff;
    let deadline = backoff.minislots_per_slot as u64 - 1;
    let max_attempts = backoff.max_attempts as u32;
    let window = backoff.backoff_window;
    let horizon = cfg.horizon_minislots;
    let warmup = cfg.warmup();
    let count_until = horizon - backoff.minislots_per_slot as u64;
    let arrivals_per_minislot = cfg.lambda * backoff.minislot_duration_s;
    let arrivals = Poisson::new(arrivals_per_minislot).map_err(|e| Error::invalid("lambda", e.to_string()))?;

    let mut rng = stream_rng(cfg.seed, 0);
    let mut channel = match &cfg.attempt_model {
        AttemptModel::Physical(p) => Some(Channel::new(p, backoff.minislots_per_slot)),
        AttemptModel::ConstantEpsilon(_) => None,
    };
    let mut calendar: Vec<Vec<Packet>> = vec![Vec::new(); window + 1];
    let mut current = Vec::new();
    let mut success = Vec::new();
    let mut stats = SimStats {
        new_arrivals: 0,
        eventual_failures: 0,
        total_attempts: 0,
        attempts_sq_sum: 0,
        minislot_attempts: Vec::with_capacity((horizon - warmup) as usize),
        warning: None,
    };

    for t in 0..horizon {
        let slot = (t % (window as u64 + 1)) as usize;
        std::mem::swap(&mut current, &mut calendar[slot]);
        let fresh = arrivals.sample(&mut rng) as u64;
        for _ in 0..fresh {
            let channel_state = channel.as_ref().map_or(0.0, |c| c.initial(&mut rng));
            current.push(Packet { arrival: t, attempts: 0, channel: channel_state });
        }
        if t >= warmup {
            stats.minislot_attempts.push(current.len() as u32);
        }
        match (&cfg.attempt_model, channel.as_mut()) {
            (AttemptModel::ConstantEpsilon(eps), _) => {
                success.clear();
                success.extend(current.iter().map(|_| rng.random::<f64>() >= *eps));
            }
            (AttemptModel::Physical(_), Some(ch)) => ch.resolve(&current, &mut success, &mut rng),
            (AttemptModel::Physical(_), None) => unreachable!("physical model always has a channel"),
        }
        for (mut packet, ok) in current.drain(..).zip(success.iter().copied()) {
            packet.attempts += 1;
            let counted = packet.arrival >= warmup && packet.arrival < count_until;
            let done = if ok {
                true
            } else {
                let next = t + rng.random_range(1..=window as u64);
                if packet.attempts >= max_attempts || next > packet.arrival + deadline {
                    if counted {
                        stats.eventual_failures += 1;
                    }
                    true
                } else {
                    calendar[(next % (window as u64 + 1)) as usize].push(packet);
                    false
                }
            };
            if done && counted {
                let a = packet.attempts as u64;
                stats.new_arrivals += 1;
                stats.total_attempts += a;
                stats.attempts_sq_sum += a * a;
            }
        }
    }

    if stats.eventual_failures < MIN_FAILURES {
        stats.warning = Some(SimWarning::FewFailures { observed: stats.eventual_failures });
    }
    let n = stats.new_arrivals as f64;
    let delta_hat = if n > 0.0 { stats.eventual_failures as f64 / n } else { 0.0 };
    let delta_stderr = if n > 0.0 { (delta_hat * (1.0 - delta_hat) / n).sqrt() } else { f64::INFINITY };
    let window_s = (count_until - warmup) as f64 * backoff.minislot_duration_s;
    let x_hat = stats.total_attempts as f64 / window_s;
    // Compound Poisson: Var(Σ A_i) = λT·E[A²].
    let x_stderr = (stats.attempts_sq_sum as f64).sqrt() / window_s;
    let (throughput_hat, throughput_stderr) = match &cfg.attempt_model {
        AttemptModel::Physical(p) => {
            let delivered = (stats.new_arrivals - stats.eventual_failures) as f64;
            (Some(delivered / window_s * p.rate), Some(delivered.sqrt() / window_s * p.rate))
        }
        AttemptModel::ConstantEpsilon(_) => (None, None),
    };
    Ok(SimReport { stats, delta_hat, delta_stderr, x_hat, x_stderr, throughput_hat, throughput_stderr })
}
