//! Tabular dataset loading, normalization, and splitting.
//!
//! Models in this crate train on features scaled to [0, 1]; datasets remember
//! the per-feature ranges that produced that scaling so thresholds can be
//! reported in original units and held-out data can be mapped consistently.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

/// Original-unit bounds of one feature, captured at normalization time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    /// A constant column: no spread to scale by.
    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    /// Map an original-unit value into [0, 1], clamped. Degenerate ranges map
    /// everything to the bin-neutral midpoint 0.5.
    pub fn normalize(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.5
        } else {
            ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        }
    }

    /// Map a normalized value back to original units.
    pub fn denormalize(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            self.min + v * (self.max - self.min)
        }
    }
}

/// In-memory labelled tabular dataset, rows stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<usize>,
    n_features: usize,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    /// Present once the data is in normalized [0, 1] space; holds the
    /// original-unit range of each feature.
    ranges: Option<Vec<FeatureRange>>,
}

impl Dataset {
    pub fn from_parts(
        x: Vec<f64>,
        y: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n_features = feature_names.len();
        if n_features == 0 {
            return Err(Error::Data("dataset needs at least one feature".into()));
        }
        if y.is_empty() {
            return Err(Error::EmptyDataset("dataset has no rows".into()));
        }
        if x.len() != y.len() * n_features {
            return Err(Error::Data(format!(
                "{} values cannot form {} rows of {} features",
                x.len(),
                y.len(),
                n_features
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::SingleClass(format!(
                "{} class(es) declared; classification needs at least 2",
                class_names.len()
            )));
        }
        for &label in &y {
            if label >= class_names.len() {
                return Err(Error::LabelOutOfRange {
                    label,
                    n_classes: class_names.len(),
                });
            }
        }
        Ok(Dataset {
            x,
            y,
            n_features,
            feature_names,
            class_names,
            ranges: None,
        })
    }

    /// Declare data already living in [0, 1] as normalized with identity
    /// ranges. Intended for synthetic fixtures; loaded data should go through
    /// [`Dataset::normalize`].
    pub fn mark_unit_normalized(mut self) -> Self {
        self.ranges = Some(vec![FeatureRange { min: 0.0, max: 1.0 }; self.n_features]);
        self
    }

    pub fn n_instances(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.y[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_column(&self, d: usize) -> Vec<f64> {
        (0..self.n_instances()).map(|i| self.row(i)[d]).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for &label in &self.y {
            counts[label] += 1;
        }
        counts
    }

    pub fn is_normalized(&self) -> bool {
        self.ranges.is_some()
    }

    pub fn ranges(&self) -> Option<&[FeatureRange]> {
        self.ranges.as_deref()
    }

    /// Min-max scale every feature into [0, 1] using this dataset's own
    /// bounds. Returns the scaled dataset and the per-feature ranges; constant
    /// columns map to 0.5 and surface as degenerate ranges.
    pub fn normalize(&self) -> (Dataset, Vec<FeatureRange>) {
        let ranges: Vec<FeatureRange> = (0..self.n_features)
            .map(|d| {
                let col = self.feature_column(d);
                FeatureRange {
                    min: col.iter().cloned().fold(f64::INFINITY, f64::min),
                    max: col.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect();
        let ds = self
            .normalize_with(&ranges)
            .expect("ranges computed from self always match");
        (ds, ranges)
    }

    /// Scale with externally supplied ranges (the training set's), clamping
    /// out-of-range values into [0, 1]. This is how held-out data enters
    /// model space.
    pub fn normalize_with(&self, ranges: &[FeatureRange]) -> Result<Dataset> {
        if ranges.len() != self.n_features {
            return Err(Error::Data(format!(
                "{} ranges supplied for {} features",
                ranges.len(),
                self.n_features
            )));
        }
        let mut x = Vec::with_capacity(self.x.len());
        for i in 0..self.n_instances() {
            for (d, range) in ranges.iter().enumerate() {
                x.push(range.normalize(self.row(i)[d]));
            }
        }
        Ok(Dataset {
            x,
            y: self.y.clone(),
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            ranges: Some(ranges.to_vec()),
        })
    }

    fn subset_rows(&self, indices: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(indices.len() * self.n_features);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Dataset {
            x,
            y,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            ranges: self.ranges.clone(),
        }
    }

    /// Seeded stratified split. Each class is shuffled independently and cut
    /// at round(fraction * count), clamped so both sides keep at least one
    /// instance of every class. The same seed always yields the same split.
    pub fn stratified_split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction must be in (0, 1), got {}",
                train_fraction
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for c in 0..self.n_classes() {
            let mut idx: Vec<usize> = (0..self.n_instances())
                .filter(|&i| self.y[i] == c)
                .collect();
            if idx.len() < 2 {
                return Err(Error::Data(format!(
                    "class '{}' has {} instance(s); a stratified split needs at least 2",
                    self.class_names[c],
                    idx.len()
                )));
            }
            idx.shuffle(&mut rng);
            let n_train = ((train_fraction * idx.len() as f64).round() as usize)
                .clamp(1, idx.len() - 1);
            train_idx.extend_from_slice(&idx[..n_train]);
            test_idx.extend_from_slice(&idx[n_train..]);
        }
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        Ok((self.subset_rows(&train_idx), self.subset_rows(&test_idx)))
    }

    /// Project onto a subset of feature columns (random-subspace training).
    pub fn select_features(&self, features: &[usize]) -> Result<Dataset> {
        if features.is_empty() {
            return Err(Error::InvalidConfig("feature subset is empty".into()));
        }
        let mut seen = vec![false; self.n_features];
        for &d in features {
            if d >= self.n_features {
                return Err(Error::InvalidConfig(format!(
                    "feature index {} out of range for {} features",
                    d, self.n_features
                )));
            }
            if seen[d] {
                return Err(Error::InvalidConfig(format!(
                    "feature index {} repeated in subset",
                    d
                )));
            }
            seen[d] = true;
        }
        let mut x = Vec::with_capacity(self.n_instances() * features.len());
        for i in 0..self.n_instances() {
            let row = self.row(i);
            for &d in features {
                x.push(row[d]);
            }
        }
        Ok(Dataset {
            x,
            y: self.y.clone(),
            n_features: features.len(),
            feature_names: features
                .iter()
                .map(|&d| self.feature_names[d].clone())
                .collect(),
            class_names: self.class_names.clone(),
            ranges: self
                .ranges
                .as_ref()
                .map(|r| features.iter().map(|&d| r[d]).collect()),
        })
    }
}

/// How to interpret a CSV file's columns.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Label column by header name or zero-based index; defaults to the last
    /// column.
    pub label: Option<String>,
    /// Columns (names or indices) to force into ordinal encoding.
    pub categorical: Vec<String>,
}

/// A parsed CSV plus bookkeeping about what the parser did.
#[derive(Debug, Clone)]
pub struct CsvLoad {
    pub dataset: Dataset,
    /// Rows dropped because of missing values.
    pub dropped_rows: usize,
    pub label_column: String,
    /// Feature columns that were ordinal-encoded.
    pub encoded_columns: Vec<String>,
}

const MISSING_TOKENS: [&str; 7] = ["", "?", "na", "n/a", "nan", "null", "none"];

fn is_missing(token: &str) -> bool {
    MISSING_TOKENS.contains(&token.to_ascii_lowercase().as_str())
}

fn resolve_column(spec: &str, headers: &[String]) -> Result<usize> {
    if let Some(pos) = headers.iter().position(|h| h == spec) {
        return Ok(pos);
    }
    if let Ok(idx) = spec.parse::<usize>() {
        if idx < headers.len() {
            return Ok(idx);
        }
    }
    Err(Error::Data(format!(
        "column '{}' not found; available: {}",
        spec,
        headers.join(", ")
    )))
}

/// Load a CSV with a header row. Numeric feature columns parse as-is; fully
/// non-numeric columns ordinal-encode by first appearance, as do columns the
/// options force. Rows with missing values are dropped and counted. Labels map
/// to contiguous class ids in first-appearance order.
pub fn load_csv_reader<R: Read>(reader: R, options: &LoadOptions) -> Result<CsvLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.to_string())
        .collect();
    if headers.is_empty() {
        return Err(Error::EmptyDataset("no header row".into()));
    }

    let label_idx = match &options.label {
        Some(spec) => resolve_column(spec, &headers)?,
        None => headers.len() - 1,
    };
    let mut forced = vec![false; headers.len()];
    for spec in &options.categorical {
        let idx = resolve_column(spec, &headers)?;
        if idx == label_idx {
            return Err(Error::InvalidConfig(format!(
                "label column '{}' cannot also be a categorical feature",
                headers[idx]
            )));
        }
        forced[idx] = true;
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut dropped_rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        let fields: Vec<String> = record.iter().map(|f| f.to_string()).collect();
        if fields.len() != headers.len() {
            return Err(Error::Data(format!(
                "row {} has {} fields, header has {}",
                rows.len() + dropped_rows + 2,
                fields.len(),
                headers.len()
            )));
        }
        if fields.iter().any(|f| is_missing(f)) {
            dropped_rows += 1;
        } else {
            rows.push(fields);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no usable rows ({} dropped for missing values)",
            dropped_rows
        )));
    }

    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != label_idx).collect();
    let mut categorical = vec![false; headers.len()];
    for &c in &feature_cols {
        if forced[c] {
            categorical[c] = true;
            continue;
        }
        let numeric_count = rows
            .iter()
            .filter(|r| r[c].parse::<f64>().is_ok())
            .count();
        if numeric_count == rows.len() {
            categorical[c] = false;
        } else if numeric_count == 0 {
            categorical[c] = true;
        } else {
            return Err(Error::Data(format!(
                "column '{}' mixes numeric and non-numeric values; \
                 declare it categorical to ordinal-encode it",
                headers[c]
            )));
        }
    }

    let mut codes: Vec<HashMap<String, f64>> = vec![HashMap::new(); headers.len()];
    let mut class_map: HashMap<String, usize> = HashMap::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut x = Vec::with_capacity(rows.len() * feature_cols.len());
    let mut y = Vec::with_capacity(rows.len());
    for row in &rows {
        for &c in &feature_cols {
            let v = if categorical[c] {
                let next = codes[c].len() as f64;
                *codes[c].entry(row[c].clone()).or_insert(next)
            } else {
                row[c]
                    .parse::<f64>()
                    .expect("numeric columns were fully validated")
            };
            x.push(v);
        }
        let label = *class_map.entry(row[label_idx].clone()).or_insert_with(|| {
            class_names.push(row[label_idx].clone());
            class_names.len() - 1
        });
        y.push(label);
    }

    if class_names.len() < 2 {
        return Err(Error::SingleClass(format!(
            "label column '{}' holds a single class '{}'",
            headers[label_idx], class_names[0]
        )));
    }

    let feature_names: Vec<String> = feature_cols
        .iter()
        .map(|&c| headers[c].clone())
        .collect();
    let encoded_columns: Vec<String> = feature_cols
        .iter()
        .filter(|&&c| categorical[c])
        .map(|&c| headers[c].clone())
        .collect();
    let dataset = Dataset::from_parts(x, y, feature_names, class_names)?;
    Ok(CsvLoad {
        dataset,
        dropped_rows,
        label_column: headers[label_idx].clone(),
        encoded_columns,
    })
}

pub fn load_csv_path<P: AsRef<Path>>(path: P, options: &LoadOptions) -> Result<CsvLoad> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_reader(file, options)
}

const IRIS_CSV: &str = include_str!("../data/iris.csv");
const HABERMAN_CSV: &str = include_str!("../data/haberman.csv");

pub const BUILTIN_NAMES: [&str; 2] = ["iris", "haberman"];

/// Raw CSV text of a bundled dataset, if `name` matches one.
pub fn builtin_csv(name: &str) -> Option<&'static str> {
    match name {
        "iris" => Some(IRIS_CSV),
        "haberman" => Some(HABERMAN_CSV),
        _ => None,
    }
}

/// Load a bundled dataset by name. The label is the last column for both.
pub fn builtin(name: &str) -> Result<CsvLoad> {
    let csv_text = builtin_csv(name).ok_or_else(|| {
        Error::Data(format!(
            "unknown builtin dataset '{}'; available: {}",
            name,
            BUILTIN_NAMES.join(", ")
        ))
    })?;
    load_csv_reader(csv_text.as_bytes(), &LoadOptions::default())
}
