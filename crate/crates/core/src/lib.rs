//! Daily stock direction forecasting with fuzzy-membership-weighted
//! support vector machines.
//!
//! The pipeline runs OHLCV bars through technical indicators into a
//! labeled dataset, splits it per (year, class), trains soft-margin SVMs
//! whose per-example box bounds are scaled by membership weights, and
//! reports directional accuracy.

pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fsvm;
pub mod indicators;
pub mod market_data;
pub mod protocol;
pub mod registry;
pub mod synthetic;

pub use error::{Error, Result};
