//! Deterministic preprocessing: duplicate removal, forward/backward fill,
//! percentile clipping and standardization with train-slice statistics.
//!
//! Clip and standardization statistics always carry the row range they were
//! fit on, so downstream code can assert that no statistic used on a
//! validation or test slice was computed from later rows.

use std::collections::{BTreeMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, COLUMN_NAMES, TARGET_INDEX};
use crate::numerics::nearest_rank_percentile;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("column `{0}` is entirely missing; nothing to fill from")]
    AllMissingColumn(String),
    #[error("empty fit slice for column `{0}`")]
    EmptyFitSlice(String),
    #[error("invalid clip percentiles: lower {0} must be below upper {1}")]
    InvalidClipBounds(f64, f64),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

/// Percentile clipping specification with optional per-column overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipSpec {
    pub lower_pct: f64,
    pub upper_pct: f64,
    /// Per-column (lower_pct, upper_pct) overrides, keyed by column name.
    #[serde(default)]
    pub overrides: BTreeMap<String, (f64, f64)>,
}

impl Default for ClipSpec {
    fn default() -> Self {
        Self { lower_pct: 1.0, upper_pct: 99.0, overrides: BTreeMap::new() }
    }
}

impl ClipSpec {
    pub fn validate(&self) -> Result<(), PrepError> {
        if self.lower_pct >= self.upper_pct {
            return Err(PrepError::InvalidClipBounds(self.lower_pct, self.upper_pct));
        }
        for (col, &(lo, hi)) in &self.overrides {
            if lo >= hi {
                return Err(PrepError::InvalidClipBounds(lo, hi));
            }
            if crate::dataset::column_index(col).is_none() {
                return Err(PrepError::UnknownColumn(col.clone()));
            }
        }
        Ok(())
    }

    fn bounds_for(&self, col: usize) -> (f64, f64) {
        self.overrides
            .get(COLUMN_NAMES[col])
            .copied()
            .unwrap_or((self.lower_pct, self.upper_pct))
    }
}

/// Per-column statistics fit on a training slice. Carries the slice range
/// as a leakage guard.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ColumnStats {
    pub fit_start: usize,
    pub fit_end: usize,
    /// Column index -> (lower bound, upper bound).
    pub clip: BTreeMap<usize, (f64, f64)>,
    /// Column index -> (mean, std).
    pub standardize: BTreeMap<usize, (f64, f64)>,
}

impl ColumnStats {
    /// True when every statistic was fit strictly before `row`.
    pub fn fit_before(&self, row: usize) -> bool {
        self.fit_end <= row
    }
}

/// Remove duplicate block heights, keeping the first occurrence. Order is
/// preserved.
pub fn dedup(d: &Dataset) -> Dataset {
    let mut seen = HashSet::new();
    let records = d
        .records
        .iter()
        .filter(|r| seen.insert(r.block_height))
        .cloned()
        .collect();
    Dataset { records, provenance: d.provenance }
}

/// Fill one column forward, then backward.
pub fn fill_column(values: &mut [f64]) {
    let mut last = f64::NAN;
    for v in values.iter_mut() {
        if v.is_nan() {
            *v = last;
        } else {
            last = *v;
        }
    }
    let mut next = f64::NAN;
    for v in values.iter_mut().rev() {
        if v.is_nan() {
            *v = next;
        } else {
            next = *v;
        }
    }
}

/// Forward-fill then backward-fill every nullable column. A column with no
/// finite entries at all is an error.
pub fn fill_missing(d: &Dataset) -> Result<Dataset, PrepError> {
    let mut out = d.clone();
    if out.is_empty() {
        return Ok(out);
    }
    for col in crate::dataset::nullable_columns() {
        let mut values = out.column(col);
        if values.iter().all(|v| v.is_nan()) {
            return Err(PrepError::AllMissingColumn(COLUMN_NAMES[col].to_string()));
        }
        if values.iter().any(|v| v.is_nan()) {
            fill_column(&mut values);
            out.set_column(col, &values);
        }
    }
    Ok(out)
}

/// Compute clip bounds for `columns` on rows `fit_rows` of `d`. The target
/// column is never clipped and is skipped if listed.
pub fn fit_clip(
    d: &Dataset,
    spec: &ClipSpec,
    columns: &[usize],
    fit_rows: Range<usize>,
) -> Result<ColumnStats, PrepError> {
    spec.validate()?;
    if fit_rows.is_empty() || fit_rows.end > d.len() {
        return Err(PrepError::EmptyFitSlice("<all>".to_string()));
    }
    let mut stats = ColumnStats {
        fit_start: fit_rows.start,
        fit_end: fit_rows.end,
        ..ColumnStats::default()
    };
    for &col in columns {
        if col == TARGET_INDEX {
            continue;
        }
        let slice: Vec<f64> =
            d.records[fit_rows.clone()].iter().map(|r| r.get(col)).collect();
        let (lo_pct, hi_pct) = spec.bounds_for(col);
        let lo = nearest_rank_percentile(&slice, lo_pct)
            .ok_or_else(|| PrepError::EmptyFitSlice(COLUMN_NAMES[col].to_string()))?;
        let hi = nearest_rank_percentile(&slice, hi_pct)
            .ok_or_else(|| PrepError::EmptyFitSlice(COLUMN_NAMES[col].to_string()))?;
        stats.clip.insert(col, (lo, hi));
    }
    Ok(stats)
}

/// Replace values outside the fitted bounds by the bound. Row count is
/// unchanged; NaNs pass through.
pub fn apply_clip(d: &Dataset, stats: &ColumnStats) -> Dataset {
    let mut out = d.clone();
    for (&col, &(lo, hi)) in &stats.clip {
        for r in out.records.iter_mut() {
            let v = r.get(col);
            if v.is_nan() {
                continue;
            }
            r.set(col, v.clamp(lo, hi));
        }
    }
    out
}

/// Mean/std of the finite entries of a slice; `(0, 0)` when empty.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return (0.0, 0.0);
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fit standardization statistics for `columns` on rows `fit_rows`.
pub fn fit_standardize(
    d: &Dataset,
    columns: &[usize],
    fit_rows: Range<usize>,
) -> Result<ColumnStats, PrepError> {
    if fit_rows.is_empty() || fit_rows.end > d.len() {
        return Err(PrepError::EmptyFitSlice("<all>".to_string()));
    }
    let mut stats = ColumnStats {
        fit_start: fit_rows.start,
        fit_end: fit_rows.end,
        ..ColumnStats::default()
    };
    for &col in columns {
        if col == TARGET_INDEX {
            continue;
        }
        let slice: Vec<f64> =
            d.records[fit_rows.clone()].iter().map(|r| r.get(col)).collect();
        let (mean, std) = mean_std(&slice);
        stats.standardize.insert(col, (mean, std));
    }
    Ok(stats)
}

/// z = (x - mean) / std; a zero-std column maps to all zeros.
pub fn standardize_value(v: f64, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        (v - mean) / std
    }
}

/// Inverse of [`standardize_value`] for nonzero std.
pub fn unstandardize_value(z: f64, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        mean
    } else {
        z * std + mean
    }
}

/// Apply fitted standardization to a dataset.
pub fn apply_standardize(d: &Dataset, stats: &ColumnStats) -> Dataset {
    let mut out = d.clone();
    for (&col, &(mean, std)) in &stats.standardize {
        for r in out.records.iter_mut() {
            let v = r.get(col);
            if v.is_nan() {
                continue;
            }
            r.set(col, standardize_value(v, mean, std));
        }
    }
    out
}

/// Invert [`apply_standardize`].
pub fn invert_standardize(d: &Dataset, stats: &ColumnStats) -> Dataset {
    let mut out = d.clone();
    for (&col, &(mean, std)) in &stats.standardize {
        for r in out.records.iter_mut() {
            let v = r.get(col);
            if v.is_nan() {
                continue;
            }
            r.set(col, unstandardize_value(v, mean, std));
        }
    }
    out
}
