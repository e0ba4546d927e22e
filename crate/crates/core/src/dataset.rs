//! Loop-detector traffic records in the UTD19 column layout.
//!
//! Parsing is keyed by header name, so column order in the file does not
//! matter and unknown columns are skipped. Every row is validated; the first
//! bad field aborts the parse with its data-row number (1-based, header not
//! counted) and column name.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Model input columns, in the fixed order used everywhere.
pub const FEATURE_NAMES: [&str; 3] = ["interval", "occ", "speed"];
pub const N_FEATURES: usize = FEATURE_NAMES.len();

/// Columns a UTD19-style file must carry. Also the writer's column order.
pub const COLUMNS: [&str; 7] = ["day", "interval", "detid", "flow", "occ", "speed", "city"];

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: column `{column}` is not a valid number")]
    TypeError { row: usize, column: String },
    #[error("row {row}: column `{column}` is out of range")]
    RangeError { row: usize, column: String },
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("input exceeds the limit of {0} data rows")]
    TooManyRows(usize),
    #[error("malformed csv: {0}")]
    Malformed(String),
    #[error("train fraction {0} is outside (0, 1)")]
    InvalidFraction(f64),
    #[error("feature matrix is empty")]
    EmptyMatrix,
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficRecord {
    pub day: String,
    /// Seconds since midnight.
    pub interval: u32,
    pub detid: String,
    /// Vehicles per hour.
    pub flow: f64,
    /// Fraction of time the loop is occupied, in `[0, 1]`.
    pub occ: f64,
    /// km/h.
    pub speed: f64,
    pub city: String,
}

impl TrafficRecord {
    pub fn features(&self) -> FeatureVector {
        FeatureVector {
            interval: f64::from(self.interval),
            occ: self.occ,
            speed: self.speed,
        }
    }

    fn validate(&self, row: usize) -> Result<(), DatasetError> {
        let range = |column: &str| DatasetError::RangeError {
            row,
            column: column.to_string(),
        };
        if self.day.is_empty() {
            return Err(range("day"));
        }
        if self.detid.is_empty() {
            return Err(range("detid"));
        }
        if self.city.is_empty() {
            return Err(range("city"));
        }
        if !(self.flow >= 0.0) {
            return Err(range("flow"));
        }
        if !(0.0..=1.0).contains(&self.occ) {
            return Err(range("occ"));
        }
        if !(self.speed >= 0.0) {
            return Err(range("speed"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<TrafficRecord>,
    pub source: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn flows(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.flow).collect()
    }
}

/// One model input row: `(interval, occ, speed)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub interval: f64,
    pub occ: f64,
    pub speed: f64,
}

impl FeatureVector {
    pub const fn new(interval: f64, occ: f64, speed: f64) -> Self {
        Self {
            interval,
            occ,
            speed,
        }
    }

    pub fn to_array(self) -> [f64; N_FEATURES] {
        [self.interval, self.occ, self.speed]
    }

    pub fn from_array(values: [f64; N_FEATURES]) -> Self {
        Self::new(values[0], values[1], values[2])
    }

    pub fn get(&self, feature: usize) -> f64 {
        self.to_array()[feature]
    }
}

impl From<[f64; N_FEATURES]> for FeatureVector {
    fn from(values: [f64; N_FEATURES]) -> Self {
        Self::from_array(values)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, feature: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r.get(feature))
    }
}

impl From<Vec<FeatureVector>> for FeatureMatrix {
    fn from(rows: Vec<FeatureVector>) -> Self {
        Self { rows }
    }
}

/// Population statistics of one feature column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ParseLimits {
    pub max_rows: Option<usize>,
}

impl Default for ParseLimits {
    fn default() -> Self {
        Self {
            max_rows: Some(10_000_000),
        }
    }
}

pub fn parse_csv<R: Read>(source: R, limits: ParseLimits) -> Result<Dataset, DatasetError> {
    parse_csv_named(source, limits, "<stream>")
}

pub fn read_csv_file(path: &std::path::Path) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path)
        .map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    parse_csv_named(
        std::io::BufReader::new(file),
        ParseLimits::default(),
        &path.display().to_string(),
    )
}

fn parse_csv_named<R: Read>(
    source: R,
    limits: ParseLimits,
    name: &str,
) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);

    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        // A stream with no bytes at all has no header either.
        Err(e) if is_eof(&e) => return Err(DatasetError::EmptyInput),
        Err(e) => return Err(DatasetError::Malformed(e.to_string())),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(DatasetError::EmptyInput);
    }
    let mut index = [0usize; 7];
    for (slot, column) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == column)
            .ok_or_else(|| DatasetError::MissingColumn(column.to_string()))?;
    }
    let [i_day, i_interval, i_detid, i_flow, i_occ, i_speed, i_city] = index;

    let mut records = Vec::new();
    for (n, result) in reader.records().enumerate() {
        let row = n + 1;
        if let Some(max) = limits.max_rows {
            if row > max {
                return Err(DatasetError::TooManyRows(max));
            }
        }
        let rec = result.map_err(|e| DatasetError::Malformed(format!("row {row}: {e}")))?;
        let text = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let real = |i: usize, column: &str| -> Result<f64, DatasetError> {
            let field = rec.get(i).unwrap_or("").trim();
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(DatasetError::TypeError {
                    row,
                    column: column.to_string(),
                }),
            }
        };
        let interval_field = rec.get(i_interval).unwrap_or("").trim();
        let interval = match interval_field.parse::<i64>() {
            Ok(v) if v < 0 => {
                return Err(DatasetError::RangeError {
                    row,
                    column: "interval".into(),
                })
            }
            Ok(v) => u32::try_from(v).map_err(|_| DatasetError::RangeError {
                row,
                column: "interval".into(),
            })?,
            Err(_) => {
                return Err(DatasetError::TypeError {
                    row,
                    column: "interval".into(),
                })
            }
        };
        let record = TrafficRecord {
            day: text(i_day),
            interval,
            detid: text(i_detid),
            flow: real(i_flow, "flow")?,
            occ: real(i_occ, "occ")?,
            speed: real(i_speed, "speed")?,
            city: text(i_city),
        };
        record.validate(row)?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    Ok(Dataset {
        records,
        source: name.to_string(),
    })
}

fn is_eof(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof)
}

/// Writes `d` with the fixed column order of [`COLUMNS`] and reals rounded to
/// six significant digits. Output is byte-deterministic.
pub fn write_csv<W: Write>(d: &Dataset, sink: W) -> Result<(), DatasetError> {
    let io = |e: csv::Error| DatasetError::Io(e.to_string());
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    writer.write_record(COLUMNS).map_err(io)?;
    for r in &d.records {
        writer
            .write_record([
                r.day.clone(),
                r.interval.to_string(),
                r.detid.clone(),
                format_sig6(r.flow),
                format_sig6(r.occ),
                format_sig6(r.speed),
                r.city.clone(),
            ])
            .map_err(io)?;
    }
    writer
        .flush()
        .map_err(|e| DatasetError::Io(e.to_string()))?;
    Ok(())
}

/// Shortest decimal text of `v` rounded to six significant digits.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{v:.5e}").parse().unwrap_or(v);
    format!("{rounded}")
}

/// Seeded shuffle, then the first `floor(n * train_fraction)` rows go to
/// training and the rest to inference.
///
/// The shuffle is a descending Fisher–Yates over row indices driven by
/// `ChaCha8Rng::seed_from_u64(seed)`: for `i` from `n-1` down to `1`, draw
/// `j` uniformly in `0..=i` and swap positions `i` and `j`.
pub fn split(
    d: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    if d.is_empty() {
        return Err(DatasetError::EmptyInput);
    }
    let order = shuffled_indices(d.len(), seed);
    let n_train = (d.len() as f64 * train_fraction).floor() as usize;
    let take = |idx: &[usize], tag: &str| Dataset {
        records: idx.iter().map(|&i| d.records[i].clone()).collect(),
        source: format!("{}#{tag}", d.source),
    };
    Ok((take(&order[..n_train], "train"), take(&order[n_train..], "inference")))
}

pub(crate) fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

pub fn feature_matrix(d: &Dataset) -> FeatureMatrix {
    FeatureMatrix {
        rows: d.records.iter().map(TrafficRecord::features).collect(),
    }
}

pub fn feature_stats(m: &FeatureMatrix) -> Result<[FeatureStats; N_FEATURES], DatasetError> {
    if m.is_empty() {
        return Err(DatasetError::EmptyMatrix);
    }
    let n = m.len() as f64;
    Ok(std::array::from_fn(|j| {
        let mean = m.column(j).sum::<f64>() / n;
        let var = m.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let (min, max) = m
            .column(j)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        FeatureStats {
            mean,
            std: var.sqrt(),
            min,
            max,
        }
    }))
}

/// Deterministic synthetic traffic data in the UTD19 layout.
///
/// Flow follows a rough fundamental-diagram shape (flow ≈ density × speed,
/// with density proportional to occupancy) plus a time-of-day bump and noise.
/// Used for fixtures, demos and benchmarks.
pub fn synthetic(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cities = ["augsburg", "bern", "london", "zurich"];
    let records = (0..n)
        .map(|i| {
            let interval = rng.random_range(0..288u32) * 300;
            let hour = f64::from(interval) / 3600.0;
            let peak = (-(hour - 8.0).powi(2) / 4.0).exp() + (-(hour - 17.5).powi(2) / 5.0).exp();
            let occ = (0.03 + 0.35 * peak * rng.random::<f64>() + 0.05 * rng.random::<f64>())
                .min(0.95);
            let speed = (110.0 * (1.0 - occ).powi(2) + 10.0 * rng.random::<f64>()).max(3.0);
            let density = occ * 140.0;
            let flow = (density * speed * (0.9 + 0.2 * rng.random::<f64>()) + 40.0 * peak).max(0.0);
            let city = cities[i % cities.len()];
            TrafficRecord {
                day: format!("2017-05-{:02}", 1 + (i / 97) % 28),
                interval,
                detid: format!("{}.D{:03}", city[..3].to_uppercase(), rng.random_range(0..40u32)),
                flow: format_sig6(flow).parse().unwrap_or(flow),
                occ: format_sig6(occ).parse().unwrap_or(occ),
                speed: format_sig6(speed).parse().unwrap_or(speed),
                city: city.to_string(),
            }
        })
        .collect();
    Dataset {
        records,
        source: format!("synthetic(n={n}, seed={seed})"),
    }
}
