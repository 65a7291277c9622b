//! Core building blocks for the fee-rate forecasting pipeline.
//!
//! - [`dataset`] — canonical per-block record type, CSV persistence, validation
//! - [`prep`] — deterministic preprocessing (dedup, fill, clip, standardize)
//! - [`featgen`] — engineered features: fee histograms, rolling stats, lags
//! - [`numerics`] — differencing, EMA, Nelder-Mead, ridge regression
//! - [`eval`] — MAE / RMSE / Theil's U, expanding-window cross-validation
//! - [`synth`] — seeded synthetic dataset generator for tests and demos

pub mod dataset;
pub mod eval;
pub mod featgen;
pub mod numerics;
pub mod prep;
pub mod synth;

pub use dataset::{Dataset, FeeRecord};
pub use featgen::{FeatureMatrix, FeatureSpec};
pub use eval::{CvFold, Forecaster, MetricsReport};
