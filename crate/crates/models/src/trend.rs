//! Decomposable trend model: piecewise-linear trend with changepoints plus
//! Fourier seasonality, fit in one shot by ridge regression.
//!
//! Changepoints sit at uniform quantiles of the first `changepoint_range`
//! fraction of the training span. The L2 penalty stands in for the L1
//! changepoint sparsity of the original tool; it keeps the solve closed-form.

use serde::{Deserialize, Serialize};

use feecast_core::numerics::ridge_solve;

use crate::ModelError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendConfig {
    pub n_changepoints: usize,
    /// Fraction of the training span eligible for changepoints.
    pub changepoint_range: f64,
    /// Number of Fourier harmonics for the seasonal block.
    pub fourier_order: usize,
    /// Season length in blocks.
    pub period: f64,
    /// Ridge penalty.
    pub lambda: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self {
            n_changepoints: 25,
            changepoint_range: 0.8,
            fourier_order: 10,
            period: 144.0,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendModel {
    pub config: TrendConfig,
    pub changepoints: Vec<f64>,
    pub coefficients: Vec<f64>,
}

/// Changepoint locations: uniform quantiles of `[t0, t0 + range * span]`.
pub fn changepoint_locations(t: &[f64], cfg: &TrendConfig) -> Vec<f64> {
    if cfg.n_changepoints == 0 || t.len() < 2 {
        return Vec::new();
    }
    let t0 = t[0];
    let span = (t[t.len() - 1] - t0) * cfg.changepoint_range;
    (1..=cfg.n_changepoints)
        .map(|i| t0 + span * i as f64 / (cfg.n_changepoints + 1) as f64)
        .collect()
}

/// Design row for one time point: `[1, t, hinge(t - c_i).., sin/cos pairs..]`.
fn design_row(t: f64, changepoints: &[f64], cfg: &TrendConfig) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 + changepoints.len() + 2 * cfg.fourier_order);
    row.push(1.0);
    row.push(t);
    for &c in changepoints {
        row.push((t - c).max(0.0));
    }
    for k in 1..=cfg.fourier_order {
        let arg = 2.0 * std::f64::consts::PI * k as f64 * t / cfg.period;
        row.push(arg.sin());
        row.push(arg.cos());
    }
    row
}

/// Full design matrix for a time series.
pub fn design_matrix(t: &[f64], changepoints: &[f64], cfg: &TrendConfig) -> Vec<Vec<f64>> {
    t.iter().map(|&ti| design_row(ti, changepoints, cfg)).collect()
}

/// Number of design columns: intercept + slope + changepoints + 2K Fourier.
pub fn n_columns(cfg: &TrendConfig) -> usize {
    2 + cfg.n_changepoints + 2 * cfg.fourier_order
}

pub fn fit(y: &[f64], t: &[f64], cfg: &TrendConfig) -> Result<TrendModel, ModelError> {
    if y.len() != t.len() {
        return Err(ModelError::LengthMismatch(format!("{} targets vs {} times", y.len(), t.len())));
    }
    let cols = n_columns(cfg);
    if y.len() < cols {
        return Err(ModelError::TooFewRows(format!("{} rows for {} design columns", y.len(), cols)));
    }
    let changepoints = changepoint_locations(t, cfg);
    let rows = design_matrix(t, &changepoints, cfg);
    let coefficients = ridge_solve(&rows, y, cfg.lambda)?;
    Ok(TrendModel { config: cfg.clone(), changepoints, coefficients })
}

pub fn forecast(model: &TrendModel, t_future: &[f64]) -> Vec<f64> {
    t_future
        .iter()
        .map(|&t| {
            design_row(t, &model.changepoints, &model.config)
                .iter()
                .zip(&model.coefficients)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index_times(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn column_count_minimal() {
        let cfg = TrendConfig { n_changepoints: 0, fourier_order: 1, ..TrendConfig::default() };
        assert_eq!(n_columns(&cfg), 4); // 1, t, sin, cos
        let rows = design_matrix(&index_times(10), &[], &cfg);
        assert!(rows.iter().all(|r| r.len() == 4));
    }

    #[test]
    fn column_count_formula() {
        for (ncp, k) in [(5usize, 3usize), (25, 10), (0, 1)] {
            let cfg =
                TrendConfig { n_changepoints: ncp, fourier_order: k, ..TrendConfig::default() };
            assert_eq!(n_columns(&cfg), 2 + ncp + 2 * k);
            let t = index_times(200);
            let cps = changepoint_locations(&t, &cfg);
            let rows = design_matrix(&t, &cps, &cfg);
            assert!(rows.iter().all(|r| r.len() == 2 + ncp + 2 * k));
        }
    }

    #[test]
    fn hinge_is_zero_before_changepoint() {
        let cfg = TrendConfig { n_changepoints: 1, fourier_order: 1, ..TrendConfig::default() };
        let t = index_times(100);
        let cps = changepoint_locations(&t, &cfg);
        assert_eq!(cps.len(), 1);
        let rows = design_matrix(&t, &cps, &cfg);
        for (i, row) in rows.iter().enumerate() {
            if (i as f64) < cps[0] {
                assert_eq!(row[2], 0.0);
            } else {
                assert!(row[2] >= 0.0);
            }
        }
    }

    #[test]
    fn exact_linear_recovery() {
        let t = index_times(200);
        let y: Vec<f64> = t.iter().map(|ti| 3.0 + 0.5 * ti).collect();
        let cfg = TrendConfig {
            n_changepoints: 0,
            fourier_order: 1,
            lambda: 1e-8,
            ..TrendConfig::default()
        };
        let model = fit(&y, &t, &cfg).unwrap();
        assert!((model.coefficients[1] - 0.5).abs() < 1e-6, "slope {}", model.coefficients[1]);
        assert!((model.coefficients[0] - 3.0).abs() < 1e-4, "intercept {}", model.coefficients[0]);
    }

    #[test]
    fn constant_series_forecasts_constant() {
        let t = index_times(300);
        let y = vec![7.0; 300];
        let model = fit(&y, &t, &TrendConfig::default()).unwrap();
        let future: Vec<f64> = (300..350).map(|i| i as f64).collect();
        for v in forecast(&model, &future) {
            assert!((v - 7.0).abs() < 0.05, "{v}");
        }
    }

    #[test]
    fn seasonal_sinusoid_extrapolates() {
        // Synthetic seasonal oracle: y = sin(2 pi t / 144); out-of-sample
        // RMSE over the next 144 points must be small.
        let n = 1000;
        let t = index_times(n);
        let y: Vec<f64> =
            t.iter().map(|ti| (2.0 * std::f64::consts::PI * ti / 144.0).sin()).collect();
        let model = fit(&y, &t, &TrendConfig::default()).unwrap();
        let future: Vec<f64> = (n..n + 144).map(|i| i as f64).collect();
        let preds = forecast(&model, &future);
        let mse: f64 = future
            .iter()
            .zip(&preds)
            .map(|(&ti, &p)| {
                let actual = (2.0 * std::f64::consts::PI * ti / 144.0).sin();
                (actual - p).powi(2)
            })
            .sum::<f64>()
            / 144.0;
        assert!(mse.sqrt() <= 0.05, "rmse {}", mse.sqrt());
    }

    #[test]
    fn forecast_is_linear_in_targets() {
        let t = index_times(400);
        let y: Vec<f64> = t
            .iter()
            .map(|ti| 1.0 + 0.02 * ti + (2.0 * std::f64::consts::PI * ti / 144.0).sin())
            .collect();
        let scaled: Vec<f64> = y.iter().map(|v| 3.0 * v).collect();
        let cfg = TrendConfig { lambda: 1e-8, ..TrendConfig::default() };
        let m1 = fit(&y, &t, &cfg).unwrap();
        let m2 = fit(&scaled, &t, &cfg).unwrap();
        let future: Vec<f64> = (400..420).map(|i| i as f64).collect();
        for (a, b) in forecast(&m1, &future).iter().zip(forecast(&m2, &future)) {
            assert!((3.0 * a - b).abs() < 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn reduces_to_plain_line_without_seasonality() {
        // 0 changepoints and K=0 leaves only intercept and slope.
        let cfg = TrendConfig {
            n_changepoints: 0,
            fourier_order: 0,
            lambda: 1e-10,
            ..TrendConfig::default()
        };
        assert_eq!(n_columns(&cfg), 2);
        let t = index_times(50);
        let y: Vec<f64> = t.iter().map(|ti| -2.0 + 1.5 * ti).collect();
        let model = fit(&y, &t, &cfg).unwrap();
        assert_eq!(model.coefficients.len(), 2);
        assert!((model.coefficients[1] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn too_few_rows_rejected() {
        let cfg = TrendConfig::default();
        let t = index_times(10);
        let y = vec![1.0; 10];
        assert!(matches!(fit(&y, &t, &cfg), Err(ModelError::TooFewRows(_))));
    }
}
