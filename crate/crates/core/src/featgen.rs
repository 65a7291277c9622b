//! Engineered features: mempool fee histograms and the ratios/diversity
//! derived from them, trailing rolling statistics, lagged columns, and the
//! feature-matrix builder that feeds the models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, COLUMN_NAMES, TARGET_INDEX};
use crate::numerics::nearest_rank_percentile;
use crate::prep::fill_column;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("lag {lag} too large for series of length {len}")]
    LagTooLarge { lag: usize, len: usize },
    #[error("lag must be at least 1")]
    InvalidLag,
    #[error("rolling window must be at least 2, got {0}")]
    InvalidWindow(usize),
    #[error("histogram edges must be strictly ascending")]
    EdgesNotAscending,
    #[error("fee thresholds must satisfy t_low < t_high, got {0} and {1}")]
    InvalidThresholds(f64, f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

/// Binned distribution of mempool fee rates. Bin `i` covers
/// `[edges[i], edges[i+1])`; the final bin is open-ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeHistogram {
    pub bin_edges: Vec<f64>,
    pub bin_mass: Vec<f64>,
}

impl FeeHistogram {
    pub fn total_mass(&self) -> f64 {
        self.bin_mass.iter().sum()
    }
}

/// Configuration for the engineered feature set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Trailing rolling window in blocks; `None` disables rolling features.
    pub rolling_window: Option<usize>,
    /// Target lags in blocks.
    pub lags: Vec<usize>,
    /// Fee histogram bin edges in sat/vB (final bin open-ended).
    pub histogram_edges: Vec<f64>,
    /// Low/medium fee-band boundary in sat/vB.
    pub t_low: f64,
    /// Medium/high fee-band boundary in sat/vB.
    pub t_high: f64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            rolling_window: Some(36),
            lags: vec![1, 2, 3, 144],
            histogram_edges: vec![0.0, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0, 50.0, 100.0],
            t_low: 3.0,
            t_high: 12.0,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if let Some(w) = self.rolling_window {
            if w < 2 {
                return Err(FeatureError::InvalidWindow(w));
            }
        }
        if self.lags.iter().any(|&l| l == 0) {
            return Err(FeatureError::InvalidLag);
        }
        if self.histogram_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FeatureError::EdgesNotAscending);
        }
        if self.t_low >= self.t_high {
            return Err(FeatureError::InvalidThresholds(self.t_low, self.t_high));
        }
        Ok(())
    }
}

/// Count fee rates into half-open bins `[e_i, e_{i+1})`, with everything at
/// or above the last edge in the final bin. Values below the first edge are
/// counted in the first bin.
pub fn histogram_from_rates(rates: &[f64], edges: &[f64]) -> Result<FeeHistogram, FeatureError> {
    if edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FeatureError::EdgesNotAscending);
    }
    let mut mass = vec![0.0; edges.len()];
    for &r in rates {
        if r.is_nan() {
            continue;
        }
        // partition_point returns the count of edges <= r; bin is that - 1.
        let idx = edges.partition_point(|&e| e <= r);
        mass[idx.saturating_sub(1)] += 1.0;
    }
    Ok(FeeHistogram { bin_edges: edges.to_vec(), bin_mass: mass })
}

/// Fractions of histogram mass below `t_low`, between the thresholds, and at
/// or above `t_high`. A bin is attributed to the band containing its left
/// edge. Empty histogram yields `(0, 0, 0)`.
pub fn fee_ratios(h: &FeeHistogram, t_low: f64, t_high: f64) -> (f64, f64, f64) {
    let total = h.total_mass();
    if total <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let (mut low, mut med, mut high) = (0.0, 0.0, 0.0);
    for (&edge, &m) in h.bin_edges.iter().zip(&h.bin_mass) {
        if edge < t_low {
            low += m;
        } else if edge < t_high {
            med += m;
        } else {
            high += m;
        }
    }
    (low / total, med / total, high / total)
}

/// Normalized Shannon entropy of the histogram mass distribution:
/// `H(p) / ln(B)` with `B` the total number of bins. Returns 0 when at most
/// one bin is occupied.
pub fn fee_diversity(h: &FeeHistogram) -> f64 {
    let total = h.total_mass();
    let bins = h.bin_mass.len();
    if total <= 0.0 || bins < 2 {
        return 0.0;
    }
    let occupied = h.bin_mass.iter().filter(|&&m| m > 0.0).count();
    if occupied <= 1 {
        return 0.0;
    }
    let mut entropy = 0.0;
    for &m in &h.bin_mass {
        if m > 0.0 {
            let p = m / total;
            entropy -= p * p.ln();
        }
    }
    (entropy / (bins as f64).ln()).clamp(0.0, 1.0)
}

/// Trailing rolling mean and population standard deviation over windows of
/// `w` values inclusive of the current one. The first `w-1` entries are NaN.
pub fn rolling_stats(series: &[f64], w: usize) -> Result<(Vec<f64>, Vec<f64>), FeatureError> {
    if w < 2 {
        return Err(FeatureError::InvalidWindow(w));
    }
    let n = series.len();
    let mut means = vec![f64::NAN; n];
    let mut stds = vec![f64::NAN; n];
    for i in (w - 1)..n {
        let window = &series[i + 1 - w..=i];
        let mean = window.iter().sum::<f64>() / w as f64;
        let var = window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w as f64;
        means[i] = mean;
        stds[i] = var.sqrt();
    }
    Ok((means, stds))
}

/// Shift the series by each lag, leaving NaN in the leading positions.
/// Every lag must satisfy `1 <= lag < series.len()`.
pub fn lagged(series: &[f64], lags: &[usize]) -> Result<Vec<Vec<f64>>, FeatureError> {
    let n = series.len();
    let mut out = Vec::with_capacity(lags.len());
    for &lag in lags {
        if lag == 0 {
            return Err(FeatureError::InvalidLag);
        }
        if lag >= n {
            return Err(FeatureError::LagTooLarge { lag, len: n });
        }
        let mut col = vec![f64::NAN; n];
        for i in lag..n {
            col[i] = series[i - lag];
        }
        out.push(col);
    }
    Ok(out)
}

/// Column-major numeric matrix with named columns and an aligned target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(target: Vec<f64>) -> Self {
        Self { column_names: Vec::new(), columns: Vec::new(), target }
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, idx: usize) -> &[f64] {
        &self.columns[idx]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[f64]> {
        let idx = self.column_names.iter().position(|c| c == name)?;
        Some(&self.columns[idx])
    }

    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<f64>) {
        assert_eq!(values.len(), self.target.len(), "column length mismatch");
        self.column_names.push(name.into());
        self.columns.push(values);
    }

    /// One observation as a dense row vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// All observations as dense row vectors.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|i| self.row(i)).collect()
    }

    /// Fill warmup NaNs left by rolling/lag construction with the standard
    /// forward-then-backward rule, per column.
    pub fn fill_warmup(&mut self) {
        for col in self.columns.iter_mut() {
            if col.iter().any(|v| v.is_nan()) {
                fill_column(col);
            }
        }
    }

    /// Restrict to rows `[0, end)`.
    pub fn head(&self, end: usize) -> FeatureMatrix {
        FeatureMatrix {
            column_names: self.column_names.clone(),
            columns: self.columns.iter().map(|c| c[..end].to_vec()).collect(),
            target: self.target[..end].to_vec(),
        }
    }

    /// Standardize every column in place with the supplied (mean, std) pairs.
    pub fn standardize_columns(&mut self, stats: &[(f64, f64)]) {
        assert_eq!(stats.len(), self.columns.len(), "stats length mismatch");
        for (col, &(mean, std)) in self.columns.iter_mut().zip(stats) {
            for v in col.iter_mut() {
                *v = crate::prep::standardize_value(*v, mean, std);
            }
        }
    }
}

/// Build the model feature matrix from a preprocessed dataset: every raw
/// column except the target, plus trailing rolling statistics and lags of
/// the target series. Warmup entries are left as NaN.
pub fn build_matrix(
    d: &Dataset,
    spec: &FeatureSpec,
    target_name: &str,
) -> Result<FeatureMatrix, FeatureError> {
    spec.validate()?;
    let target_idx = crate::dataset::column_index(target_name).unwrap_or(TARGET_INDEX);
    let y = d.column(target_idx);
    let mut m = FeatureMatrix::new(y.clone());

    for (idx, &name) in COLUMN_NAMES.iter().enumerate() {
        if idx == target_idx {
            continue;
        }
        m.push_column(name, d.column(idx));
    }

    if let Some(w) = spec.rolling_window {
        let (means, stds) = rolling_stats(&y, w)?;
        m.push_column(format!("target_roll_mean_{w}"), means);
        m.push_column(format!("target_roll_std_{w}"), stds);
    }
    for (col, &lag) in lagged(&y, &spec.lags)?.into_iter().zip(&spec.lags) {
        m.push_column(format!("target_lag_{lag}"), col);
    }

    Ok(m)
}

/// Summary statistics of a set of mempool fee rates, using the shared
/// nearest-rank percentile definition. All zeros for an empty set.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeeRateSummary {
    pub min: f64,
    pub max: f64,
    pub avg: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
    pub std: f64,
}

pub fn summarize_rates(rates: &[f64]) -> FeeRateSummary {
    let finite: Vec<f64> = rates.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return FeeRateSummary::default();
    }
    let n = finite.len() as f64;
    let avg = finite.iter().sum::<f64>() / n;
    let var = finite.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / n;
    FeeRateSummary {
        min: finite.iter().copied().fold(f64::INFINITY, f64::min),
        max: finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        avg,
        median: nearest_rank_percentile(&finite, 50.0).unwrap(),
        p10: nearest_rank_percentile(&finite, 10.0).unwrap(),
        p90: nearest_rank_percentile(&finite, 90.0).unwrap(),
        std: var.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate;
    use proptest::prelude::*;

    #[test]
    fn histogram_hand_count() {
        let h = histogram_from_rates(&[1.0, 2.0, 10.0], &[0.0, 3.0, 10.0]).unwrap();
        assert_eq!(h.bin_mass, vec![2.0, 0.0, 1.0]);
    }

    #[test]
    fn histogram_empty_rates() {
        let h = histogram_from_rates(&[], &[0.0, 3.0, 10.0]).unwrap();
        assert_eq!(h.bin_mass, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn histogram_edge_value_goes_right() {
        let h = histogram_from_rates(&[3.0], &[0.0, 3.0, 10.0]).unwrap();
        assert_eq!(h.bin_mass, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn ratios_arithmetic() {
        let h = FeeHistogram { bin_edges: vec![0.0, 3.0, 10.0], bin_mass: vec![2.0, 0.0, 1.0] };
        let (low, med, high) = fee_ratios(&h, 3.0, 10.0);
        assert!((low - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(med, 0.0);
        assert!((high - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ratios_all_low() {
        let h = FeeHistogram { bin_edges: vec![0.0, 1.0, 2.0], bin_mass: vec![4.0, 1.0, 0.0] };
        assert_eq!(fee_ratios(&h, 5.0, 10.0), (1.0, 0.0, 0.0));
    }

    #[test]
    fn ratios_empty_histogram() {
        let h = FeeHistogram { bin_edges: vec![0.0, 1.0], bin_mass: vec![0.0, 0.0] };
        assert_eq!(fee_ratios(&h, 0.5, 1.0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn diversity_point_mass_is_zero() {
        let h = FeeHistogram { bin_edges: vec![0.0, 1.0, 2.0], bin_mass: vec![0.0, 9.0, 0.0] };
        assert_eq!(fee_diversity(&h), 0.0);
    }

    #[test]
    fn diversity_uniform_is_one() {
        let h = FeeHistogram { bin_edges: vec![0.0, 1.0, 2.0, 3.0], bin_mass: vec![2.5; 4] };
        assert!((fee_diversity(&h) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diversity_matches_entropy_oracle() {
        let h = FeeHistogram { bin_edges: vec![0.0, 3.0, 10.0], bin_mass: vec![2.0, 0.0, 1.0] };
        // Direct entropy computation over the occupied bins.
        let expected = -((2.0 / 3.0) * (2.0f64 / 3.0).ln() + (1.0 / 3.0) * (1.0f64 / 3.0).ln())
            / 3.0f64.ln();
        assert!((fee_diversity(&h) - expected).abs() < 1e-12);
        assert!((expected - 0.5794).abs() < 1e-4);
    }

    #[test]
    fn rolling_means_arithmetic() {
        let (means, _) = rolling_stats(&[1.0, 2.0, 3.0, 4.0, 5.0], 2).unwrap();
        assert!(means[0].is_nan());
        assert_eq!(&means[1..], &[1.5, 2.5, 3.5, 4.5]);
    }

    #[test]
    fn rolling_std_of_constant_is_zero() {
        let (_, stds) = rolling_stats(&[4.0; 10], 3).unwrap();
        assert!(stds[..2].iter().all(|v| v.is_nan()));
        assert!(stds[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rolling_matches_bruteforce_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let series: Vec<f64> = (0..150).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w = 7;
        let (means, stds) = rolling_stats(&series, w).unwrap();
        for i in (w - 1)..series.len() {
            let window: Vec<f64> = series[i + 1 - w..=i].to_vec();
            let m = window.iter().sum::<f64>() / w as f64;
            let v = window.iter().map(|x| (x - m).powi(2)).sum::<f64>() / w as f64;
            assert!((means[i] - m).abs() < 1e-12);
            assert!((stds[i] - v.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn lag_one_shifts() {
        let cols = lagged(&[1.0, 2.0, 3.0], &[1]).unwrap();
        assert!(cols[0][0].is_nan());
        assert_eq!(&cols[0][1..], &[1.0, 2.0]);
    }

    #[test]
    fn lag_zero_rejected() {
        assert!(matches!(lagged(&[1.0, 2.0], &[0]), Err(FeatureError::InvalidLag)));
    }

    #[test]
    fn lag_equal_to_length_rejected() {
        assert!(matches!(
            lagged(&[1.0, 2.0, 3.0], &[3]),
            Err(FeatureError::LagTooLarge { lag: 3, len: 3 })
        ));
    }

    #[test]
    fn matrix_column_count() {
        let d = generate(200, 20);
        let spec = FeatureSpec::default(); // w=36, lags {1,2,3,144}
        let m = build_matrix(&d, &spec, "block_median_fee_rate").unwrap();
        assert_eq!(m.n_cols(), 21 + 2 + 4);
        assert_eq!(m.n_rows(), 200);
    }

    #[test]
    fn matrix_raw_only_when_disabled() {
        let d = generate(50, 21);
        let spec = FeatureSpec { rolling_window: None, lags: vec![], ..FeatureSpec::default() };
        let m = build_matrix(&d, &spec, "block_median_fee_rate").unwrap();
        assert_eq!(m.n_cols(), 21);
    }

    #[test]
    fn matrix_has_no_lookahead() {
        // Shift oracle: perturbing rows > i must leave row i unchanged.
        let d = generate(160, 22);
        let spec =
            FeatureSpec { rolling_window: Some(5), lags: vec![1, 3], ..FeatureSpec::default() };
        let m1 = build_matrix(&d, &spec, "block_median_fee_rate").unwrap();

        let mut d2 = d.clone();
        let cut = 100;
        for r in d2.records.iter_mut().skip(cut + 1) {
            r.block_median_fee_rate += 37.0;
            r.avg_fee_rate += 11.0;
        }
        let m2 = build_matrix(&d2, &spec, "block_median_fee_rate").unwrap();
        for c in 0..m1.n_cols() {
            for i in 0..=cut {
                let (a, b) = (m1.column(c)[i], m2.column(c)[i]);
                assert!(
                    a == b || (a.is_nan() && b.is_nan()),
                    "col {} row {i} changed: {a} vs {b}",
                    m1.column_names[c]
                );
            }
        }
    }

    #[test]
    fn fill_warmup_removes_nans() {
        let d = generate(60, 23);
        let spec =
            FeatureSpec { rolling_window: Some(6), lags: vec![1, 2], ..FeatureSpec::default() };
        let mut m = build_matrix(&d, &spec, "block_median_fee_rate").unwrap();
        m.fill_warmup();
        for c in 0..m.n_cols() {
            assert!(m.column(c).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn summarize_rates_arithmetic() {
        let s = summarize_rates(&[1.0, 2.0, 10.0]);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.max, 10.0);
        assert!((s.avg - 13.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.median, 2.0);
    }

    #[test]
    fn summarize_rates_empty_is_zero() {
        assert_eq!(summarize_rates(&[]), FeeRateSummary::default());
    }

    proptest! {
        #[test]
        fn ratios_sum_to_one_when_occupied(rates in proptest::collection::vec(0.0f64..150.0, 1..60)) {
            let spec = FeatureSpec::default();
            let h = histogram_from_rates(&rates, &spec.histogram_edges).unwrap();
            let (low, med, high) = fee_ratios(&h, spec.t_low, spec.t_high);
            prop_assert!((low + med + high - 1.0).abs() < 1e-9);
            for v in [low, med, high] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let div = fee_diversity(&h);
            prop_assert!((0.0..=1.0).contains(&div));
        }

        #[test]
        fn diversity_invariant_under_bin_permutation(mass in proptest::collection::vec(0.0f64..20.0, 4..10)) {
            let n = mass.len();
            let edges: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let h = FeeHistogram { bin_edges: edges.clone(), bin_mass: mass.clone() };
            let mut reversed = mass;
            reversed.reverse();
            let h2 = FeeHistogram { bin_edges: edges, bin_mass: reversed };
            prop_assert!((fee_diversity(&h) - fee_diversity(&h2)).abs() < 1e-12);
        }
    }
}
