//! Canonical per-block dataset: record type, CSV persistence, validation.
//!
//! One [`FeeRecord`] captures a confirmed block together with the mempool,
//! network and price context observed when it arrived. A [`Dataset`] is an
//! ordered collection of records with a fixed column schema shared by the
//! CSV files, the feature matrix builder and the ingestion pipeline.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical column order. The CSV header must contain these names in this
/// relative order; unknown extra columns are tolerated and ignored.
pub const COLUMN_NAMES: [&str; 22] = [
    "timestamp",
    "block_height",
    "block_weight",
    "block_interval",
    "block_version",
    "tx_count",
    "mempool_size_mb",
    "min_fee_rate",
    "max_fee_rate",
    "avg_fee_rate",
    "median_fee_rate",
    "fee_rate_10th",
    "fee_rate_90th",
    "fee_rate_std",
    "difficulty",
    "hash_rate",
    "bitcoin_price_usd",
    "hist_low_fee_ratio",
    "hist_med_fee_ratio",
    "hist_high_fee_ratio",
    "fee_diversity",
    "block_median_fee_rate",
];

/// Number of columns in the canonical schema.
pub const N_COLUMNS: usize = COLUMN_NAMES.len();

/// Name of the prediction target column.
pub const TARGET_COLUMN: &str = "block_median_fee_rate";

/// Index of the target column in the canonical order.
pub const TARGET_INDEX: usize = N_COLUMNS - 1;

/// Resolve a canonical column name to its index.
pub fn column_index(name: &str) -> Option<usize> {
    COLUMN_NAMES.iter().position(|&c| c == name)
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file has no header row: {0}")]
    EmptyFile(String),
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("columns out of canonical order: `{0}` appears before `{1}`")]
    ColumnOrder(String, String),
    #[error("malformed number at row {row}, column `{col}`: {value:?}")]
    MalformedNumber { row: usize, col: String, value: String },
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("csv failure: {0}")]
    CsvFailure(#[from] csv::Error),
}

/// Where a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Live,
    #[default]
    File,
    Synthetic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Live => write!(f, "live"),
            Provenance::File => write!(f, "file"),
            Provenance::Synthetic => write!(f, "synthetic"),
        }
    }
}

/// One row of the canonical dataset. Mempool-derived fields may be NaN for
/// rows backfilled after an ingestion outage; everything else is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeRecord {
    pub timestamp: i64,
    pub block_height: u64,
    pub block_weight: f64,
    pub block_interval: f64,
    pub block_version: i64,
    pub tx_count: f64,
    pub mempool_size_mb: f64,
    pub min_fee_rate: f64,
    pub max_fee_rate: f64,
    pub avg_fee_rate: f64,
    pub median_fee_rate: f64,
    pub fee_rate_10th: f64,
    pub fee_rate_90th: f64,
    pub fee_rate_std: f64,
    pub difficulty: f64,
    pub hash_rate: f64,
    pub bitcoin_price_usd: f64,
    pub hist_low_fee_ratio: f64,
    pub hist_med_fee_ratio: f64,
    pub hist_high_fee_ratio: f64,
    pub fee_diversity: f64,
    pub block_median_fee_rate: f64,
}

impl FeeRecord {
    /// Numeric view of a field by canonical column index.
    pub fn get(&self, col: usize) -> f64 {
        match col {
            0 => self.timestamp as f64,
            1 => self.block_height as f64,
            2 => self.block_weight,
            3 => self.block_interval,
            4 => self.block_version as f64,
            5 => self.tx_count,
            6 => self.mempool_size_mb,
            7 => self.min_fee_rate,
            8 => self.max_fee_rate,
            9 => self.avg_fee_rate,
            10 => self.median_fee_rate,
            11 => self.fee_rate_10th,
            12 => self.fee_rate_90th,
            13 => self.fee_rate_std,
            14 => self.difficulty,
            15 => self.hash_rate,
            16 => self.bitcoin_price_usd,
            17 => self.hist_low_fee_ratio,
            18 => self.hist_med_fee_ratio,
            19 => self.hist_high_fee_ratio,
            20 => self.fee_diversity,
            21 => self.block_median_fee_rate,
            _ => panic!("column index {col} out of range"),
        }
    }

    /// Write a numeric value into a field by canonical column index.
    /// Integer-typed fields round to the nearest integer.
    pub fn set(&mut self, col: usize, v: f64) {
        match col {
            0 => self.timestamp = v.round() as i64,
            1 => self.block_height = v.round() as u64,
            2 => self.block_weight = v,
            3 => self.block_interval = v,
            4 => self.block_version = v.round() as i64,
            5 => self.tx_count = v,
            6 => self.mempool_size_mb = v,
            7 => self.min_fee_rate = v,
            8 => self.max_fee_rate = v,
            9 => self.avg_fee_rate = v,
            10 => self.median_fee_rate = v,
            11 => self.fee_rate_10th = v,
            12 => self.fee_rate_90th = v,
            13 => self.fee_rate_std = v,
            14 => self.difficulty = v,
            15 => self.hash_rate = v,
            16 => self.bitcoin_price_usd = v,
            17 => self.hist_low_fee_ratio = v,
            18 => self.hist_med_fee_ratio = v,
            19 => self.hist_high_fee_ratio = v,
            20 => self.fee_diversity = v,
            21 => self.block_median_fee_rate = v,
            _ => panic!("column index {col} out of range"),
        }
    }
}

/// Ordered collection of [`FeeRecord`]s with fixed column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<FeeRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(provenance: Provenance) -> Self {
        Self { records: Vec::new(), provenance }
    }

    pub fn from_records(records: Vec<FeeRecord>, provenance: Provenance) -> Self {
        Self { records, provenance }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column_names(&self) -> &'static [&'static str] {
        &COLUMN_NAMES
    }

    /// Materialize one column as a numeric vector.
    pub fn column(&self, col: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.get(col)).collect()
    }

    /// The target series (`block_median_fee_rate`).
    pub fn target(&self) -> Vec<f64> {
        self.column(TARGET_INDEX)
    }

    /// Overwrite one column from a numeric vector. Panics on length mismatch.
    pub fn set_column(&mut self, col: usize, values: &[f64]) {
        assert_eq!(values.len(), self.records.len(), "column length mismatch");
        for (r, &v) in self.records.iter_mut().zip(values) {
            r.set(col, v);
        }
    }

    pub fn push(&mut self, record: FeeRecord) {
        self.records.push(record);
    }

    /// Dataset restricted to rows `[0, end)`, keeping provenance.
    pub fn head(&self, end: usize) -> Dataset {
        Dataset { records: self.records[..end].to_vec(), provenance: self.provenance }
    }
}

// Integer-typed canonical columns; formatted without a decimal point.
const INT_COLUMNS: [usize; 3] = [0, 1, 4];

fn format_field(col: usize, v: f64) -> String {
    if v.is_nan() {
        return String::new();
    }
    if INT_COLUMNS.contains(&col) {
        format!("{}", v as i64)
    } else {
        // Shortest round-trip decimal form.
        format!("{v}")
    }
}

fn parse_field(raw: &str, row: usize, col: usize) -> Result<f64, DatasetError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("nan") {
        if INT_COLUMNS.contains(&col) {
            return Err(DatasetError::MalformedNumber {
                row,
                col: COLUMN_NAMES[col].to_string(),
                value: raw.to_string(),
            });
        }
        return Ok(f64::NAN);
    }
    trimmed.parse::<f64>().map_err(|_| DatasetError::MalformedNumber {
        row,
        col: COLUMN_NAMES[col].to_string(),
        value: raw.to_string(),
    })
}

/// Load a dataset from a canonical CSV file.
///
/// The header must contain every canonical column, in canonical relative
/// order; extra columns are ignored. Empty cells parse as NaN (missing) for
/// float columns and are rejected for integer columns.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DatasetError::EmptyFile(path.display().to_string()));
    }

    // Map canonical column -> position in the file, enforcing relative order.
    let mut positions = [0usize; N_COLUMNS];
    let mut last_pos: Option<usize> = None;
    for (ci, name) in COLUMN_NAMES.iter().enumerate() {
        let pos = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))?;
        if let Some(prev) = last_pos {
            if pos < prev {
                return Err(DatasetError::ColumnOrder(
                    name.to_string(),
                    COLUMN_NAMES[ci - 1].to_string(),
                ));
            }
        }
        positions[ci] = pos;
        last_pos = Some(pos);
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let mut rec = FeeRecord {
            timestamp: 0,
            block_height: 0,
            block_weight: 0.0,
            block_interval: 0.0,
            block_version: 0,
            tx_count: 0.0,
            mempool_size_mb: 0.0,
            min_fee_rate: 0.0,
            max_fee_rate: 0.0,
            avg_fee_rate: 0.0,
            median_fee_rate: 0.0,
            fee_rate_10th: 0.0,
            fee_rate_90th: 0.0,
            fee_rate_std: 0.0,
            difficulty: 0.0,
            hash_rate: 0.0,
            bitcoin_price_usd: 0.0,
            hist_low_fee_ratio: 0.0,
            hist_med_fee_ratio: 0.0,
            hist_high_fee_ratio: 0.0,
            fee_diversity: 0.0,
            block_median_fee_rate: 0.0,
        };
        for (ci, &pos) in positions.iter().enumerate() {
            let raw = row.get(pos).unwrap_or("");
            let v = parse_field(raw, i + 2, ci)?; // 1-based, after header
            rec.set(ci, v);
        }
        records.push(rec);
    }

    Ok(Dataset { records, provenance: Provenance::File })
}

/// Write a dataset to a canonical CSV file: header plus one row per record,
/// floats in shortest round-trip form, NaN as an empty cell.
pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let file = File::create(path.as_ref())?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", COLUMN_NAMES.join(","))?;
    for r in &d.records {
        let fields: Vec<String> = (0..N_COLUMNS).map(|c| format_field(c, r.get(c))).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Identifier for a violated record invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    HeightOrder,
    TimestampOrder,
    RatioSum,
    RatioRange,
    FeeRateNegative,
    PercentileOrder,
    MinAvgMaxOrder,
    DiversityRange,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RuleId::HeightOrder => "height_order",
            RuleId::TimestampOrder => "timestamp_order",
            RuleId::RatioSum => "ratio_sum",
            RuleId::RatioRange => "ratio_range",
            RuleId::FeeRateNegative => "fee_rate_negative",
            RuleId::PercentileOrder => "percentile_order",
            RuleId::MinAvgMaxOrder => "min_avg_max_order",
            RuleId::DiversityRange => "diversity_range",
        };
        write!(f, "{s}")
    }
}

/// One invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub row: usize,
    pub rule: RuleId,
    pub detail: String,
}

/// Result of validating a dataset. Violations are data, not errors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

const RATIO_SUM_TOL: f64 = 1e-9;

/// Check every record-level invariant. Rules that touch a NaN (missing)
/// field are skipped for that record; monotonicity rules reference the
/// previous record only.
pub fn validate(d: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut push = |row: usize, rule: RuleId, detail: String| {
        report.violations.push(Violation { row, rule, detail });
    };

    for (i, r) in d.records.iter().enumerate() {
        if i > 0 {
            let prev = &d.records[i - 1];
            if r.block_height <= prev.block_height {
                push(
                    i,
                    RuleId::HeightOrder,
                    format!("height {} not above previous {}", r.block_height, prev.block_height),
                );
            }
            if r.timestamp < prev.timestamp {
                push(
                    i,
                    RuleId::TimestampOrder,
                    format!("timestamp {} below previous {}", r.timestamp, prev.timestamp),
                );
            }
        }

        let ratios = [r.hist_low_fee_ratio, r.hist_med_fee_ratio, r.hist_high_fee_ratio];
        if ratios.iter().all(|v| v.is_finite()) {
            for v in ratios {
                if !(0.0..=1.0).contains(&v) {
                    push(i, RuleId::RatioRange, format!("ratio {v} outside [0,1]"));
                    break;
                }
            }
            let sum: f64 = ratios.iter().sum();
            if ratios.iter().any(|&v| v != 0.0) && (sum - 1.0).abs() > RATIO_SUM_TOL {
                push(i, RuleId::RatioSum, format!("ratios sum to {sum}"));
            }
        }

        let rates = [
            r.min_fee_rate,
            r.max_fee_rate,
            r.avg_fee_rate,
            r.median_fee_rate,
            r.fee_rate_10th,
            r.fee_rate_90th,
            r.fee_rate_std,
            r.block_median_fee_rate,
        ];
        for v in rates {
            if v.is_finite() && v < 0.0 {
                push(i, RuleId::FeeRateNegative, format!("negative fee rate {v}"));
                break;
            }
        }

        if r.fee_rate_10th.is_finite()
            && r.median_fee_rate.is_finite()
            && r.fee_rate_90th.is_finite()
            && !(r.fee_rate_10th <= r.median_fee_rate && r.median_fee_rate <= r.fee_rate_90th)
        {
            push(
                i,
                RuleId::PercentileOrder,
                format!(
                    "10th {} / median {} / 90th {}",
                    r.fee_rate_10th, r.median_fee_rate, r.fee_rate_90th
                ),
            );
        }

        if r.min_fee_rate.is_finite()
            && r.avg_fee_rate.is_finite()
            && r.max_fee_rate.is_finite()
            && !(r.min_fee_rate <= r.avg_fee_rate && r.avg_fee_rate <= r.max_fee_rate)
        {
            push(
                i,
                RuleId::MinAvgMaxOrder,
                format!("min {} / avg {} / max {}", r.min_fee_rate, r.avg_fee_rate, r.max_fee_rate),
            );
        }

        if r.fee_diversity.is_finite() && !(0.0..=1.0).contains(&r.fee_diversity) {
            push(i, RuleId::DiversityRange, format!("diversity {}", r.fee_diversity));
        }
    }

    report
}

/// Columns that may legitimately contain NaN (mempool/price context missing
/// on backfilled rows).
pub fn nullable_columns() -> Vec<usize> {
    COLUMN_NAMES
        .iter()
        .enumerate()
        .filter(|(i, _)| !INT_COLUMNS.contains(i))
        .map(|(i, _)| i)
        .collect()
}

/// Heights present more than once, used by dedup diagnostics.
pub fn duplicate_heights(d: &Dataset) -> Vec<u64> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for r in &d.records {
        if !seen.insert(r.block_height) {
            dups.push(r.block_height);
        }
    }
    dups
}
