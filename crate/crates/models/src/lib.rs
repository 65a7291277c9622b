//! Forecasting models for block-level fee rates.
//!
//! Five model families share the [`feecast_core::Forecaster`] interface:
//!
//! - [`sarimax`] — seasonal ARIMA with exogenous regressors, estimated by
//!   conditional sum of squares
//! - [`trend`] — piecewise-linear trend with changepoints plus Fourier
//!   seasonality, fit by ridge regression
//! - [`t2v`] — learned time embedding feeding a small feed-forward network
//! - [`gbm`] — gradient-boosted regression trees with histogram splits
//! - [`hybrid`] — SARIMAX base predictions refined by a GBM on an enhanced
//!   feature set, combined through an error-driven dynamic weight

pub mod carry;
pub mod forecasters;
pub mod gbm;
pub mod hybrid;
pub mod sarimax;
pub mod t2v;
pub mod trend;

pub use forecasters::{
    GbmForecaster, HybridForecaster, SarimaxForecaster, T2vForecaster, TrendForecaster,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("series too short: need more than {need} observations, got {got}")]
    SeriesTooShort { need: usize, got: usize },
    #[error("forecast horizon must be positive")]
    HorizonNonPositive,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("too few rows: {0}")]
    TooFewRows(String),
    #[error("optimizer failure: {0}")]
    OptimizerFailure(String),
    #[error("training diverged: loss became non-finite at epoch {0}")]
    Diverged(usize),
    #[error("numeric kernel failure: {0}")]
    Numeric(#[from] feecast_core::numerics::NumericError),
    #[error("feature construction failure: {0}")]
    Feature(#[from] feecast_core::featgen::FeatureError),
}
