//! Two-timescale optimization for an IRS-aided D2D underlay link.
//!
//! The slow timescale designs the IRS phase shifts against the channel
//! distribution ([`large_timescale`]); the fast timescale picks the BS
//! beamformer and the D2D transmit power for each effective channel
//! ([`small_timescale`]). [`schemes`] composes these with the comparison
//! baselines.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix `f64`.

pub mod channel;
pub mod config;
pub mod error;
pub mod large_timescale;
pub mod linalg;
pub mod metrics;
pub mod real;
pub mod rng;
pub mod schemes;
pub mod small_timescale;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use real::Real;

pub type SystemConfig = config::SystemConfig<f64>;
pub type SolverSettings = config::SolverSettings<f64>;
pub type ChannelStatistics = channel::ChannelStatistics<f64>;
pub type ChannelRealization = channel::ChannelRealization<f64>;
pub type PhaseShifts = channel::PhaseShifts<f64>;
pub type EffectiveChannels = channel::EffectiveChannels<f64>;
pub type Complex = linalg::Cx<f64>;
