//! Link budget, reference SNR and the effective channel gain
//! `g = X·h·(r/r_o)^(-γ)` for devices dropped uniformly over a disk.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::mc::stream_rng;
use crate::real::{db_to_linear, Real};

/// Gains are clipped below at this value so log-domain rate formulas stay finite.
pub const MIN_GAIN: f64 = 1e-12;

pub const DEFAULT_GAIN_SAMPLES: usize = 100_000;

/// Physical parameters of the uplink.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkBudget<T> {
    pub tx_power_dbm: T,
    pub bandwidth_hz: T,
    pub noise_psd_dbm_hz: T,
    pub noise_figure_db: T,
    pub antenna_gain_db: T,
    pub pathloss_exponent: T,
    pub pathloss_intercept_db: T,
    pub intercept_distance_m: T,
    pub cell_radius_m: T,
    pub shadowing_sigma_db: T,
}

impl<T: Real> Default for LinkBudget<T> {
    /// 10 dBm over 1 MHz, -174 dBm/Hz, NF 5 dB, 14 dB antenna gain,
    /// exponent 3.76 with a 128 dB intercept at 1 km, 1360 m cell, 8 dB shadowing.
    fn default() -> Self {
        LinkBudget {
            tx_power_dbm: T::of(10.0),
            bandwidth_hz: T::of(1e6),
            noise_psd_dbm_hz: T::of(-174.0),
            noise_figure_db: T::of(5.0),
            antenna_gain_db: T::of(14.0),
            pathloss_exponent: T::of(3.76),
            pathloss_intercept_db: T::of(128.0),
            intercept_distance_m: T::of(1000.0),
            cell_radius_m: T::of(1360.0),
            shadowing_sigma_db: T::of(8.0),
        }
    }
}

impl<T: Real> LinkBudget<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.tx_power_dbm,
            self.bandwidth_hz,
            self.noise_psd_dbm_hz,
            self.noise_figure_db,
            self.antenna_gain_db,
            self.pathloss_exponent,
            self.pathloss_intercept_db,
            self.intercept_distance_m,
            self.cell_radius_m,
            self.shadowing_sigma_db,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("link_budget", "all fields must be finite"));
        }
        if self.bandwidth_hz <= T::zero() {
            return Err(Error::invalid("bandwidth_hz", "must be positive"));
        }
        if self.pathloss_exponent <= T::of(2.0) {
            return Err(Error::invalid("pathloss_exponent", "must exceed 2"));
        }
        if self.cell_radius_m <= T::zero() || self.intercept_distance_m <= T::zero() {
            return Err(Error::invalid("cell_radius_m", "distances must be positive"));
        }
        if self.shadowing_sigma_db < T::zero() {
            return Err(Error::invalid("shadowing_sigma_db", "must be non-negative"));
        }
        Ok(())
    }

    /// Pathloss in dB at the cell edge.
    pub fn edge_pathloss_db(&self) -> T {
        self.pathloss_intercept_db
            + T::of(10.0) * self.pathloss_exponent * (self.cell_radius_m / self.intercept_distance_m).log10()
    }

    pub fn noise_power_dbm(&self) -> T {
        self.noise_psd_dbm_hz + T::of(10.0) * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    /// Gain model sharing this budget's exponent and shadowing.
    pub fn gain_model(&self) -> GainModel {
        GainModel::new(self.pathloss_exponent.to_f64_lossy(), self.shadowing_sigma_db.to_f64_lossy())
    }
}

impl LinkBudget<f64> {
    /// Parses a flat `key = value` file whose keys are the field names.
    /// Missing keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let budget: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        budget.validate()?;
        Ok(budget)
    }
}

/// Average received SNR from a cell-edge device at full power over the full band.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ReferenceSnr<T> {
    mu: T,
}

impl<T: Real> ReferenceSnr<T> {
    pub fn from_linear(mu: T) -> Result<Self> {
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(Error::invalid("mu_linear", "must be positive and finite"));
        }
        Ok(ReferenceSnr { mu })
    }

    pub fn from_db(db: T) -> Result<Self> {
        Self::from_linear(db_to_linear(db))
    }

    pub fn linear(&self) -> T {
        self.mu
    }

    pub fn db(&self) -> T {
        crate::real::linear_to_db(self.mu)
    }
}

pub fn reference_snr<T: Real>(budget: &LinkBudget<T>) -> Result<ReferenceSnr<T>> {
    budget.validate()?;
    let snr_db = budget.tx_power_dbm - budget.edge_pathloss_db() + budget.antenna_gain_db
        - budget.noise_power_dbm();
    ReferenceSnr::from_linear(db_to_linear(snr_db))
}

/// Where devices are dropped, as a fraction of the cell radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Uniform over the disk area: `r/r_o = sqrt(u)`.
    UniformDisk,
    Pinned(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fading {
    /// Unit-mean exponential power gain.
    Rayleigh,
    /// `h` replaced by its mean.
    Averaged,
}

/// Sampler for the effective gain `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainModel {
    pub pathloss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub placement: Placement,
    pub fading: Fading,
}

impl GainModel {
    pub fn new(pathloss_exponent: f64, shadowing_sigma_db: f64) -> Self {
        GainModel {
            pathloss_exponent,
            shadowing_sigma_db,
            placement: Placement::UniformDisk,
            fading: Fading::Rayleigh,
        }
    }

    pub fn with_placement(mut self, placement: Placement) -> Self {
        self.placement = placement;
        self
    }

    pub fn with_fading(mut self, fading: Fading) -> Self {
        self.fading = fading;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pathloss_exponent > 2.0) {
            return Err(Error::invalid("pathloss_exponent", "must exceed 2"));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(Error::invalid("shadowing_sigma_db", "must be non-negative"));
        }
        if let Placement::Pinned(f) = self.placement {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::invalid("placement", "pinned radius fraction must be in (0, 1]"));
            }
        }
        Ok(())
    }

    /// Normalized pathloss `(r/r_o)^(-γ)` for a fresh drop.
    pub fn sample_pathloss<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.placement {
            // u in (0, 1]; (sqrt u)^(-γ) = u^(-γ/2)
            Placement::UniformDisk => (1.0 - rng.random::<f64>()).powf(-0.5 * self.pathloss_exponent),
            Placement::Pinned(f) => f.powf(-self.pathloss_exponent),
        }
    }

    pub fn sample_shadowing<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.shadowing_sigma_db == 0.0 {
            return 1.0;
        }
        let z: f64 = StandardNormal.sample(rng);
        10f64.powf(self.shadowing_sigma_db * z / 10.0)
    }

    pub fn sample_fading<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.fading {
            Fading::Rayleigh => Exp1.sample(rng),
            Fading::Averaged => 1.0,
        }
    }

    /// Shadowing × pathloss: the part of `g` that is fixed for a device.
    pub fn sample_large_scale<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let pl = self.sample_pathloss(rng);
        pl * self.sample_shadowing(rng)
    }

    pub fn sample_gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let large = self.sample_large_scale(rng);
        combine_gain(large, self.sample_fading(rng))
    }
}

/// Product of the large-scale and fading factors, clipped at [`MIN_GAIN`].
pub fn combine_gain(large_scale: f64, fading: f64) -> f64 {
    (large_scale * fading).max(MIN_GAIN)
}

/// Sorted empirical sample of `g` for tail-probability queries.
#[derive(Debug, Clone, PartialEq)]
pub struct GainDistribution {
    samples: Vec<f64>,
    seed: u64,
}

impl GainDistribution {
    pub fn build(model: &GainModel, count: usize, seed: u64) -> Result<Self> {
        model.validate()?;
        // Chunks of a fixed size map to fixed streams.
        const CHUNK: usize = 4096;
        let mut samples = Vec::with_capacity(count);
        let mut stream = 0u64;
        while samples.len() < count {
            let mut rng = stream_rng(seed, stream);
            let n = CHUNK.min(count - samples.len());
            samples.extend((0..n).map(|_| model.sample_gain(&mut rng)));
            stream += 1;
        }
        samples.sort_by(f64::total_cmp);
        Ok(GainDistribution { samples, seed })
    }

    /// Wraps arbitrary positive samples (they are sorted here).
    pub fn from_samples(mut samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::invalid("samples", "gains must be positive"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(GainDistribution { samples, seed: 0 })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fraction of samples `>= threshold`.
    pub fn ccdf(&self, threshold: f64) -> Result<f64> {
        if self.samples.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let below = self.samples.partition_point(|&g| g < threshold);
        Ok((self.samples.len() - below) as f64 / self.samples.len() as f64)
    }

    pub fn median(&self) -> Option<f64> {
        self.samples.get(self.samples.len() / 2).copied()
    }
}

/// Free-function form of [`GainDistribution::ccdf`].
pub fn gain_ccdf(dist: &GainDistribution, threshold: f64) -> Result<f64> {
    dist.ccdf(threshold)
}
