//! Policies for supplying exogenous values over a forecast horizon, where
//! the true future covariates are unknown.

use serde::{Deserialize, Serialize};

/// How future exogenous rows are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExogPolicy {
    /// Future row `u` takes the observed value from row `u - season`
    /// (yesterday's same slot), walking back further for horizons beyond
    /// one season.
    #[default]
    SeasonalCarry,
    /// Every future row repeats the last observed row.
    FreezeLast,
}

/// Index of the observed row (`< train_end`) standing in for future row `u`.
/// Falls back to the last observed row when the history is shorter than one
/// season.
pub fn carry_index(u: usize, train_end: usize, season: usize, policy: ExogPolicy) -> usize {
    debug_assert!(train_end > 0);
    match policy {
        ExogPolicy::FreezeLast => train_end - 1,
        ExogPolicy::SeasonalCarry => {
            let mut v = u;
            while v >= train_end {
                if v < season || season == 0 {
                    return train_end - 1;
                }
                v -= season;
            }
            v
        }
    }
}

/// Value standing in for `series[u]` when rows at or beyond `train_end` are
/// unknown.
pub fn carried_value(series: &[f64], u: usize, train_end: usize, season: usize) -> f64 {
    series[carry_index(u, train_end, season, ExogPolicy::SeasonalCarry)]
}

/// One future row per horizon step, drawn from `columns` under `policy`.
/// Row `j` (0-based) stands for absolute row `train_end + j`.
pub fn future_rows(
    columns: &[Vec<f64>],
    train_end: usize,
    horizon: usize,
    season: usize,
    policy: ExogPolicy,
) -> Vec<Vec<f64>> {
    (0..horizon)
        .map(|j| {
            let src = carry_index(train_end + j, train_end, season, policy);
            columns.iter().map(|c| c[src]).collect()
        })
        .collect()
}
