//! Downlink beamforming for a two-cell MISO network.

pub mod asymptotic;
pub mod channel;
pub mod downlink;
pub mod dual_uplink;
pub mod error;
pub mod baselines;
pub mod experiments;
pub(crate) mod power;

pub use error::{Error, Result};
