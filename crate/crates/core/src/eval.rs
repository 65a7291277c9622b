//! Forecast evaluation: MAE / RMSE / Theil's U, expanding-window
//! cross-validation, final hold-out testing, and Pearson correlation
//! analysis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, COLUMN_NAMES, N_COLUMNS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} actuals vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    Empty,
    #[error("constant actuals: naive benchmark denominator is zero")]
    ConstantActuals,
    #[error("insufficient rows: need {need}, have {have}")]
    InsufficientRows { need: usize, have: usize },
    #[error("too few rows for correlation: {0}")]
    TooFewRows(usize),
    #[error("model `{model}` failed on fold {fold}: {source}")]
    ModelFailure {
        model: String,
        fold: usize,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum();
    Ok(sum / actual.len() as f64)
}

/// Root mean squared error.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let sum: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    Ok((sum / actual.len() as f64).sqrt())
}

/// Theil's U: RMSE of the forecast divided by RMSE of the lag-1 naive
/// forecast, with `anchor` standing in for the actual value immediately
/// before the evaluation window.
pub fn theils_u(actual: &[f64], predicted: &[f64], anchor: f64) -> Result<f64, EvalError> {
    check_pair(actual, predicted)?;
    let n = actual.len() as f64;
    let num: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / n;
    let mut prev = anchor;
    let mut den = 0.0;
    for &a in actual {
        den += (a - prev).powi(2);
        prev = a;
    }
    den /= n;
    if den == 0.0 {
        return Err(EvalError::ConstantActuals);
    }
    Ok((num / den).sqrt())
}

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<(), EvalError> {
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch(actual.len(), predicted.len()));
    }
    Ok(())
}

/// One expanding-window fold: train on `[0, train_end)`, evaluate on
/// `[test_start, test_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvFold {
    pub index: usize,
    pub train_end: usize,
    pub test_start: usize,
    pub test_end: usize,
}

/// Expanding-window folds: fold `i` trains on `[0, initial + i*step)` and
/// tests on the next `horizon` rows.
pub fn expanding_folds(
    n_rows: usize,
    initial: usize,
    step: usize,
    horizon: usize,
    k_folds: usize,
) -> Result<Vec<CvFold>, EvalError> {
    if k_folds == 0 || initial == 0 || horizon == 0 {
        return Err(EvalError::InsufficientRows { need: 1, have: 0 });
    }
    let need = initial + (k_folds - 1) * step + horizon;
    if need > n_rows {
        return Err(EvalError::InsufficientRows { need, have: n_rows });
    }
    Ok((0..k_folds)
        .map(|i| {
            let train_end = initial + i * step;
            CvFold { index: i, train_end, test_start: train_end, test_end: train_end + horizon }
        })
        .collect())
}

/// A model that can be backtested: fit on rows `[0, train_end)` of the
/// dataset and produce predictions for the next `horizon` rows.
///
/// Honest implementations must not read rows at or beyond `train_end`; the
/// lag-1 naive benchmark is the deliberate exception, since Theil's U
/// defines it over the actual values of the evaluation window.
pub trait Forecaster: Sync {
    fn name(&self) -> &str;

    fn forecast_fold(
        &self,
        data: &Dataset,
        train_end: usize,
        horizon: usize,
    ) -> Result<Vec<f64>, Box<dyn std::error::Error + Send + Sync>>;
}

/// Lag-1 naive benchmark: each prediction is the previous actual value.
/// This is exactly the denominator process of Theil's U.
pub struct NaiveLag1;

impl Forecaster for NaiveLag1 {
    fn name(&self) -> &str {
        "naive"
    }

    fn forecast_fold(
        &self,
        data: &Dataset,
        train_end: usize,
        horizon: usize,
    ) -> Result<Vec<f64>, Box<dyn std::error::Error + Send + Sync>> {
        let y = data.target();
        if train_end == 0 || train_end + horizon > y.len() {
            return Err("naive benchmark needs one prior actual and the test window".into());
        }
        Ok((0..horizon).map(|j| y[train_end + j - 1]).collect())
    }
}

/// Metrics for a single fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub train_end: usize,
    pub test_start: usize,
    pub test_end: usize,
    pub mae: f64,
    pub rmse: f64,
    pub theils_u: f64,
}

/// Per-fold and aggregate metrics for one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub folds: Vec<FoldMetrics>,
    pub mae: f64,
    pub rmse: f64,
    pub theils_u: f64,
    /// Wall-clock runtime; excluded from serialized reports so identical
    /// inputs produce byte-identical outputs.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl MetricsReport {
    /// CSV rendering: one line per fold plus an aggregate line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,fold,train_end,test_start,test_end,mae,rmse,theils_u\n");
        for f in &self.folds {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                self.model, f.fold, f.train_end, f.test_start, f.test_end, f.mae, f.rmse, f.theils_u
            ));
        }
        out.push_str(&format!(
            "{},aggregate,,,,{},{},{}\n",
            self.model, self.mae, self.rmse, self.theils_u
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Run expanding-window cross-validation. Folds evaluate in parallel;
/// the report is assembled in fold order.
pub fn run_cv(
    model: &dyn Forecaster,
    data: &Dataset,
    folds: &[CvFold],
) -> Result<MetricsReport, EvalError> {
    let started = std::time::Instant::now();
    let y = data.target();
    let results: Vec<Result<FoldMetrics, EvalError>> = folds
        .par_iter()
        .map(|fold| {
            let preds = model
                .forecast_fold(data, fold.train_end, fold.test_end - fold.test_start)
                .map_err(|source| EvalError::ModelFailure {
                    model: model.name().to_string(),
                    fold: fold.index,
                    source,
                })?;
            let actual = &y[fold.test_start..fold.test_end];
            if preds.len() != actual.len() {
                return Err(EvalError::LengthMismatch(actual.len(), preds.len()));
            }
            let anchor = y[fold.train_end - 1];
            Ok(FoldMetrics {
                fold: fold.index,
                train_end: fold.train_end,
                test_start: fold.test_start,
                test_end: fold.test_end,
                mae: mae(actual, &preds)?,
                rmse: rmse(actual, &preds)?,
                theils_u: theils_u(actual, &preds, anchor)?,
            })
        })
        .collect();

    let mut fold_metrics = Vec::with_capacity(results.len());
    for r in results {
        fold_metrics.push(r?);
    }
    let k = fold_metrics.len() as f64;
    Ok(MetricsReport {
        model: model.name().to_string(),
        mae: fold_metrics.iter().map(|f| f.mae).sum::<f64>() / k,
        rmse: fold_metrics.iter().map(|f| f.rmse).sum::<f64>() / k,
        theils_u: fold_metrics.iter().map(|f| f.theils_u).sum::<f64>() / k,
        folds: fold_metrics,
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Final hold-out evaluation: train on everything except the last
/// `test_len` rows, forecast those rows.
pub fn run_test(
    model: &dyn Forecaster,
    data: &Dataset,
    test_len: usize,
) -> Result<MetricsReport, EvalError> {
    let n = data.len();
    if test_len == 0 || n <= test_len {
        return Err(EvalError::InsufficientRows { need: test_len + 1, have: n });
    }
    let fold = CvFold { index: 0, train_end: n - test_len, test_start: n - test_len, test_end: n };
    run_cv(model, data, &[fold])
}

/// Symmetric Pearson correlation matrix over every canonical column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// Row-major `names.len() x names.len()` values.
    pub values: Vec<Vec<f64>>,
    /// Columns whose variance is zero; their off-diagonal entries are 0.
    pub constant_columns: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("column,");
        out.push_str(&self.names.join(","));
        out.push('\n');
        for (i, name) in self.names.iter().enumerate() {
            out.push_str(name);
            for v in &self.values[i] {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Pearson correlations between all canonical columns, skipping NaN rows
/// pairwise. Constant columns correlate as 0 (flagged); the diagonal is 1.
pub fn correlation_matrix(d: &Dataset) -> Result<CorrelationMatrix, EvalError> {
    if d.len() < 2 {
        return Err(EvalError::TooFewRows(d.len()));
    }
    let cols: Vec<Vec<f64>> = (0..N_COLUMNS).map(|c| d.column(c)).collect();
    let mut constant = vec![false; N_COLUMNS];
    for (i, col) in cols.iter().enumerate() {
        let finite: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
        let (_, std) = crate::prep::mean_std(&finite);
        constant[i] = std == 0.0;
    }
    let mut values = vec![vec![0.0; N_COLUMNS]; N_COLUMNS];
    for i in 0..N_COLUMNS {
        values[i][i] = 1.0;
        for j in (i + 1)..N_COLUMNS {
            let r = pearson(&cols[i], &cols[j]).unwrap_or(0.0);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: COLUMN_NAMES.iter().map(|s| s.to_string()).collect(),
        values,
        constant_columns: constant,
    })
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x, y))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_forecast_scores_zero() {
        let y = [2.0, 3.0, 4.0];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(theils_u(&y, &y, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn unit_errors() {
        let y = [0.0, 0.0];
        let p = [1.0, -1.0];
        assert_eq!(mae(&y, &p).unwrap(), 1.0);
        assert_eq!(rmse(&y, &p).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch(1, 2))));
        assert!(matches!(rmse(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn metrics_match_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let n = rng.random_range(1..50);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let anchor: f64 = rng.random_range(-100.0..100.0);

            // Brute-force oracle with explicit loops.
            let mut abs_sum = 0.0;
            let mut sq_sum = 0.0;
            for i in 0..n {
                abs_sum += (y[i] - p[i]).abs();
                sq_sum += (y[i] - p[i]) * (y[i] - p[i]);
            }
            let o_mae = abs_sum / n as f64;
            let o_rmse = (sq_sum / n as f64).sqrt();
            let mut naive_sq = (y[0] - anchor) * (y[0] - anchor);
            for i in 1..n {
                naive_sq += (y[i] - y[i - 1]) * (y[i] - y[i - 1]);
            }
            let o_u = (sq_sum / n as f64).sqrt() / (naive_sq / n as f64).sqrt();

            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            assert!(rel(mae(&y, &p).unwrap(), o_mae) < 1e-12);
            assert!(rel(rmse(&y, &p).unwrap(), o_rmse) < 1e-12);
            assert!(rel(theils_u(&y, &p, anchor).unwrap(), o_u) < 1e-12);
            assert!(rmse(&y, &p).unwrap() >= mae(&y, &p).unwrap());
        }
    }

    #[test]
    fn naive_forecast_gives_unit_theils_u() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let y: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..50.0)).collect();
        let anchor = 13.0;
        let mut preds = vec![anchor];
        preds.extend_from_slice(&y[..99]);
        let u = theils_u(&y, &preds, anchor).unwrap();
        assert!((u - 1.0).abs() < 1e-9, "{u}");
    }

    #[test]
    fn constant_actuals_is_an_error() {
        let y = [5.0, 5.0, 5.0];
        assert!(matches!(theils_u(&y, &[4.0, 4.0, 4.0], 5.0), Err(EvalError::ConstantActuals)));
    }

    #[test]
    fn folds_match_published_protocol() {
        let folds = expanding_folds(11_665, 9_665, 144, 144, 5).unwrap();
        assert_eq!(folds.len(), 5);
        assert_eq!((folds[0].test_start, folds[0].test_end), (9_665, 9_809));
        assert_eq!((folds[4].test_start, folds[4].test_end), (10_241, 10_385));
        for w in folds.windows(2) {
            assert_eq!(w[1].train_end - w[0].train_end, 144);
            assert!(w[0].test_end <= w[1].test_start);
        }
    }

    #[test]
    fn single_fold() {
        let folds = expanding_folds(1000, 800, 144, 144, 1).unwrap();
        assert_eq!(folds.len(), 1);
        assert_eq!((folds[0].test_start, folds[0].test_end), (800, 944));
    }

    #[test]
    fn over_capacity_is_rejected() {
        assert!(matches!(
            expanding_folds(1000, 800, 144, 144, 3),
            Err(EvalError::InsufficientRows { .. })
        ));
    }

    #[test]
    fn perfect_oracle_model_scores_zero() {
        struct Oracle;
        impl Forecaster for Oracle {
            fn name(&self) -> &str {
                "oracle"
            }
            fn forecast_fold(
                &self,
                data: &Dataset,
                train_end: usize,
                horizon: usize,
            ) -> Result<Vec<f64>, Box<dyn std::error::Error + Send + Sync>> {
                Ok(data.target()[train_end..train_end + horizon].to_vec())
            }
        }
        let d = generate(400, 30);
        let folds = expanding_folds(d.len(), 300, 20, 20, 3).unwrap();
        let report = run_cv(&Oracle, &d, &folds).unwrap();
        assert_eq!(report.mae, 0.0);
        assert_eq!(report.rmse, 0.0);
        assert_eq!(report.theils_u, 0.0);
    }

    #[test]
    fn naive_model_scores_unit_u() {
        let d = generate(500, 31);
        let folds = expanding_folds(d.len(), 350, 30, 30, 4).unwrap();
        let report = run_cv(&NaiveLag1, &d, &folds).unwrap();
        assert!((report.theils_u - 1.0).abs() < 1e-9, "{}", report.theils_u);
        for f in &report.folds {
            assert!((f.theils_u - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn run_test_uses_final_window() {
        let d = generate(300, 32);
        let report = run_test(&NaiveLag1, &d, 44).unwrap();
        assert_eq!(report.folds.len(), 1);
        assert_eq!(report.folds[0].train_end, 256);
        assert_eq!(report.folds[0].test_end, 300);
    }

    #[test]
    fn correlation_diagonal_and_symmetry() {
        let d = generate(250, 33);
        let m = correlation_matrix(&d).unwrap();
        for i in 0..m.names.len() {
            assert_eq!(m.values[i][i], 1.0);
            for j in 0..m.names.len() {
                assert_eq!(m.values[i][j], m.values[j][i]);
            }
        }
    }

    #[test]
    fn correlation_of_negated_column_is_minus_one() {
        let mut d = generate(100, 34);
        let a = crate::dataset::column_index("avg_fee_rate").unwrap();
        let b = crate::dataset::column_index("fee_rate_std").unwrap();
        let col = d.column(a);
        let neg: Vec<f64> = col.iter().map(|v| -v).collect();
        d.set_column(b, &neg);
        let m = correlation_matrix(&d).unwrap();
        let r = m.get("avg_fee_rate", "fee_rate_std").unwrap();
        assert!((r + 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn constant_column_flagged_with_zero_correlation() {
        let mut d = generate(80, 35);
        let c = crate::dataset::column_index("block_version").unwrap();
        d.set_column(c, &vec![4.0; 80]);
        let m = correlation_matrix(&d).unwrap();
        assert!(m.constant_columns[c]);
        assert_eq!(m.get("block_version", "avg_fee_rate").unwrap(), 0.0);
    }

    #[test]
    fn too_few_rows_rejected() {
        let d = generate(1, 36);
        assert!(matches!(correlation_matrix(&d), Err(EvalError::TooFewRows(1))));
    }

    proptest! {
        #[test]
        fn theils_u_is_scale_invariant(
            scale in prop::sample::select(vec![-3.0f64, -0.5, 0.25, 2.0, 10.0]),
            y in proptest::collection::vec(-50.0f64..50.0, 5..40),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let p: Vec<f64> = y.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
            let anchor = 3.0;
            prop_assume!(theils_u(&y, &p, anchor).is_ok());
            let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let ps: Vec<f64> = p.iter().map(|v| v * scale).collect();
            let u1 = theils_u(&y, &p, anchor).unwrap();
            let u2 = theils_u(&ys, &ps, anchor * scale).unwrap();
            prop_assert!((u1 - u2).abs() <= 1e-12 * u1.abs().max(1.0));
        }

        #[test]
        fn rmse_dominates_mae(
            y in proptest::collection::vec(-100.0f64..100.0, 1..60),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<f64> = y.iter().map(|v| v + rng.random_range(-10.0..10.0)).collect();
            prop_assert!(rmse(&y, &p).unwrap() >= mae(&y, &p).unwrap() - 1e-15);
        }
    }
}
