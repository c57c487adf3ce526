//! Scenario files: flat `key = value` text, one key per line, `#` comments.
//! Lists use brackets, e.g. `lambda = [4, 16, 64]`.

use std::path::Path;

use serde::Deserialize;

use crate::args::{CommonArgs, CASE_NAMES, STRATEGY_NAMES};
use crate::error::CliError;
use m2m_access::{AccessStrategy, BackoffConfig, GainModel, McConfig, ReferenceSnr};

pub const DEFAULT_SIGMA_DB: f64 = 8.0;
pub const DEFAULT_PATHLOSS_EXPONENT: f64 = 3.76;
pub const DEFAULT_CONSTRAINT: f64 = 0.1;

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub sigma_db: Option<f64>,
    pub mu_db: Option<f64>,
    pub pathloss_exponent: Option<f64>,
    pub constraint: Option<f64>,
    pub out: Option<String>,
    pub strategy: Option<Vec<String>>,
    pub case: Option<Vec<String>>,
    pub lambda: Option<Vec<f64>>,
    pub lambda_log2_min: Option<i32>,
    pub lambda_log2_max: Option<i32>,
    pub per_octave: Option<usize>,
    pub rate_min: Option<f64>,
    pub rate_max: Option<f64>,
    pub rate_points: Option<usize>,
    pub payload_min: Option<f64>,
    pub payload_max: Option<f64>,
    pub payload_points: Option<usize>,
    pub optimal_case: Option<String>,
    pub aloha_case: Option<String>,
    pub minislots: Option<Vec<usize>>,
    pub max_attempts: Option<Vec<usize>>,
    pub backoff_window: Option<Vec<usize>>,
    pub epsilon: Option<Vec<f64>>,
    pub packets: Option<u64>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Settings shared by every subcommand after merging flags over the file.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    pub seed: u64,
    pub samples: usize,
    pub sigma_db: f64,
    pub mu_db: f64,
    pub pathloss_exponent: f64,
    pub constraint: f64,
    pub out: Option<std::path::PathBuf>,
}

impl Common {
    pub fn resolve(args: &CommonArgs, file: &Scenario) -> Result<Self, CliError> {
        let defaults = McConfig::default();
        let common = Common {
            seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
            samples: args.samples.or(file.samples).unwrap_or(defaults.realizations),
            sigma_db: args.sigma_db.or(file.sigma_db).unwrap_or(DEFAULT_SIGMA_DB),
            mu_db: args.mu_db.or(file.mu_db).unwrap_or(0.0),
            pathloss_exponent: args.pathloss_exponent.or(file.pathloss_exponent).unwrap_or(DEFAULT_PATHLOSS_EXPONENT),
            constraint: args.constraint.or(file.constraint).unwrap_or(DEFAULT_CONSTRAINT),
            out: args.out.clone().or_else(|| file.out.as_ref().map(Into::into)),
        };
        if !(common.constraint > 0.0 && common.constraint <= 1.0) {
            return Err(CliError::Config(format!("constraint {} must lie in (0, 1]", common.constraint)));
        }
        common.gain_model().validate()?;
        common.mc()?;
        common.mu()?;
        Ok(common)
    }

    pub fn mc(&self) -> Result<McConfig, CliError> {
        Ok(McConfig::new(self.samples, self.seed)?)
    }

    pub fn mu(&self) -> Result<ReferenceSnr, CliError> {
        Ok(ReferenceSnr::from_db(self.mu_db)?)
    }

    /// Uplink channel: Rayleigh fading over lognormal shadowing and pathloss.
    pub fn gain_model(&self) -> GainModel {
        GainModel::new(self.pathloss_exponent, self.sigma_db)
    }

    /// `key=value` pairs for the metadata comment line.
    pub fn metadata(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("version", env!("CARGO_PKG_VERSION").to_string()),
            ("sigma_db", self.sigma_db.to_string()),
            ("constraint", self.constraint.to_string()),
            ("mu_db", self.mu_db.to_string()),
            ("samples", self.samples.to_string()),
        ]
    }
}

/// Flag values if any were given, else the file's, else `default`.
pub fn pick_list<T: Clone>(flag: &[T], file: &Option<Vec<T>>, default: Vec<T>) -> Vec<T> {
    if !flag.is_empty() {
        flag.to_vec()
    } else {
        file.clone().unwrap_or(default)
    }
}

pub fn parse_strategy(name: &str) -> Result<AccessStrategy, CliError> {
    AccessStrategy::from_name(name).ok_or_else(|| {
        CliError::Usage(format!("unknown strategy `{name}`; valid: {}", STRATEGY_NAMES.join(", ")))
    })
}

pub fn parse_case(name: &str) -> Result<BackoffConfig, CliError> {
    match name {
        "1tx" => Ok(BackoffConfig::one_tx()),
        "4tx" => Ok(BackoffConfig::four_tx()),
        "8tx" => Ok(BackoffConfig::eight_tx()),
        _ => Err(CliError::Usage(format!("unknown case `{name}`; valid: {}", CASE_NAMES.join(", ")))),
    }
}
