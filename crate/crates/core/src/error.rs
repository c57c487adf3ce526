use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("gain distribution is empty (cache not initialized)")]
    EmptyDistribution,

    #[error("gain vector is empty")]
    EmptyGains,

    #[error("support of a sum of {n} uniform variables on 1..={window} overflows")]
    SupportOverflow { n: usize, window: usize },

    #[error("fixed point did not converge after {iterations} iterations (last iterate {last}, relative change {change})")]
    NoConvergence { iterations: usize, last: f64, change: f64 },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
