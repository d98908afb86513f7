//! Simulation and local module identification for linear dynamic networks.
//!
//! A dynamic network is a set of measurable node signals interconnected
//! through SISO rational transfer functions, driven by external references
//! and filtered process noise. This crate simulates such networks and
//! identifies a single target module with a two-step frequency domain
//! method: a nonparametric two-stage FRF estimate with per-frequency
//! variance (local polynomial method), smoothed by a variance-weighted
//! parametric fit. A time-domain prediction-error baseline and a Monte
//! Carlo benchmark harness are included for comparison studies.

pub mod bench;
pub mod error;
pub mod indirect;
pub mod lpm;
pub mod network;
pub mod parfit;
pub mod presets;
pub mod pem;
pub mod simulator;
pub mod tf;

pub use error::{Error, Result};
pub use network::{NetworkModel, PredictorSet};
pub use tf::RationalTf;
