//! Sum-rate maximization for MIMO broadcast channels aided by an intelligent
//! omni-surface (a surface whose elements both reflect and refract).
//!
//! The optimizer works on the dual multiple-access channel and alternates
//! between three blocks:
//!
//! - [`covariance_opt`]: dual-MAC covariances by water-filling with block
//!   coordinate maximization and a bisected power multiplier,
//! - [`ios_opt`]: closed-form per-element coefficients, optionally projected
//!   onto a table of realizable (reflection, transmission) pairs,
//! - [`power_opt`]: the reflected/refracted power split by projected gradient
//!   ascent.
//!
//! [`driver::run_ao`] ties them together and converts the result back to
//! broadcast covariances with [`rates::mac_to_bc`].

pub mod channel;
pub mod cli;
pub mod covariance_opt;
pub mod driver;
pub mod error;
pub mod ios_opt;
pub mod linalg;
pub mod power_opt;
pub mod rates;
pub mod scenario;

pub use channel::{ChannelSet, EffectiveChannels, Side};
pub use driver::{run_ao, AoOptions, AoReport};
pub use error::{Error, Result};
pub use ios_opt::{CoefficientPair, IosState, SurfaceMode};
pub use rates::{CovarianceSet, UserOrdering};
pub use scenario::Scenario;
