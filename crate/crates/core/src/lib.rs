//! Maximum uplink throughput of randomly arriving fixed-payload devices under
//! coordinated and uncoordinated multiple access, with deadline-limited
//! retransmissions, plus one-stage vs two-stage protocol capacity.
//!
//! The closed-form pieces are generic over [`Real`] (`f32`/`f64`); the
//! aliases at the crate root fix them to `f64`. Monte Carlo estimators are
//! `f64` only.

pub mod channel_model;
pub mod coordinated;
pub mod error;
pub mod event_sim;
pub mod mc;
pub mod optimizer;
pub mod profile;
pub mod protocol;
pub mod real;
pub mod retransmission;
pub mod uncoordinated;

pub use error::{Error, Result};
pub use real::Real;

pub use channel_model::{Fading, GainDistribution, GainModel, Placement};
pub use coordinated::CoordinatedStrategy;
pub use mc::{McConfig, OutageEstimate};

pub use optimizer::{AccessStrategy, RateGrid, StrategyModel, ThroughputPoint};
pub use protocol::{Protocol, StrategySelection};
pub use retransmission::{BackoffConfig, FixedPointConfig, OutageFunction};
pub use uncoordinated::{ThetaGrid, UncoordinatedStrategy};

pub type LinkBudget = channel_model::LinkBudget<f64>;
pub type ReferenceSnr = channel_model::ReferenceSnr<f64>;
pub type AttemptProbs = retransmission::AttemptProbs<f64>;
pub type UniformSumPmf = retransmission::UniformSumPmf<f64>;
pub type EffectiveRate = retransmission::EffectiveRate<f64>;
pub type GainVector = coordinated::GainVector<f64>;
pub type DecodeResult = uncoordinated::DecodeResult<f64>;
pub type ProtocolOverheads = protocol::ProtocolOverheads<f64>;


