//! Tabular ingestion and binarization.
//!
//! Raw CSV data is read into a [`RawDataset`] (typed feature columns, remapped
//! labels, weights) and then turned into a [`BinarizedDataset`]: one bitvector
//! per binary feature, which is the only representation the optimizer sees.

mod binarize;
mod bits;
mod export;
mod ingest;

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binarize::{binarize_all, binarize_guessed};
pub(crate) use binarize::all_splits_for;
pub use bits::{Bits, CaptureSet, Polarity};
pub use export::{BinarizedExport, ExportedColumn, EXPORT_SCHEMA_VERSION};
pub use ingest::{ingest_bytes, ingest_csv, ingest_csv_with, read_input, read_table, IngestOptions};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{column}` not found in header")]
    MissingColumn { column: String },
    #[error("row {row}: weight `{value}` is not a finite number")]
    NonNumericWeight { row: usize, value: String },
    #[error("row {row}: weight is negative")]
    NegativeWeight { row: usize },
    #[error("row {row}: missing value in column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("all weights are zero")]
    ZeroTotalWeight,
    #[error("every candidate binary column is constant")]
    NoInformativeColumns,
    #[error("threshold set is empty")]
    EmptyThresholdSet,
    #[error("feature index {feature} does not exist")]
    UnknownFeature { feature: usize },
    #[error("feature `{feature}` has no category `{category}`")]
    UnknownCategory { feature: String, category: String },
    #[error("feature `{feature}`: split kind does not match the column type")]
    FeatureKindMismatch { feature: String },
    #[error("threshold for feature `{feature}` is not finite")]
    NonFiniteThreshold { feature: String },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("label {label} is out of range for {n_classes} classes")]
    LabelOutOfRange { label: u32, n_classes: usize },
    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),
    #[error("malformed binarized export: {0}")]
    MalformedExport(String),
}

/// One raw feature column after type inference.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl FeatureColumn {
    pub fn len(&self) -> usize {
        match self {
            FeatureColumn::Numeric(v) => v.len(),
            FeatureColumn::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, FeatureColumn::Numeric(_))
    }

    fn select(&self, rows: &[usize]) -> FeatureColumn {
        match self {
            FeatureColumn::Numeric(v) => FeatureColumn::Numeric(rows.iter().map(|&i| v[i]).collect()),
            FeatureColumn::Categorical(v) => {
                FeatureColumn::Categorical(rows.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }

    /// Renders row `i` back to its CSV text form.
    pub fn render(&self, i: usize) -> String {
        match self {
            FeatureColumn::Numeric(v) => v[i].to_string(),
            FeatureColumn::Categorical(v) => v[i].clone(),
        }
    }

    /// Sorted distinct categories (empty for numeric columns).
    pub fn categories(&self) -> Vec<String> {
        match self {
            FeatureColumn::Numeric(_) => Vec::new(),
            FeatureColumn::Categorical(v) => {
                let mut c: Vec<String> = v.iter().cloned().collect::<HashSet<_>>().into_iter().collect();
                c.sort();
                c
            }
        }
    }
}

/// Feature columns of a CSV file, without labels or weights.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub columns: Vec<FeatureColumn>,
    pub n_rows: usize,
}

impl FeatureTable {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn select(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n_rows: rows.len(),
        }
    }
}

/// Source of a binary column: `value <= threshold` for numeric features,
/// `value == category` for categorical ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Split {
    Threshold { feature: usize, threshold: f64 },
    Category { feature: usize, category: String },
}

impl Split {
    pub fn feature(&self) -> usize {
        match self {
            Split::Threshold { feature, .. } | Split::Category { feature, .. } => *feature,
        }
    }

    /// Total order used for column ordering and duplicate resolution.
    pub fn order(&self, other: &Split) -> Ordering {
        match (self, other) {
            (Split::Threshold { feature: f1, threshold: t1 }, Split::Threshold { feature: f2, threshold: t2 }) => {
                f1.cmp(f2).then(t1.total_cmp(t2))
            }
            (Split::Category { feature: f1, category: c1 }, Split::Category { feature: f2, category: c2 }) => {
                f1.cmp(f2).then_with(|| c1.cmp(c2))
            }
            (Split::Threshold { feature: f1, .. }, Split::Category { feature: f2, .. }) => {
                f1.cmp(f2).then(Ordering::Less)
            }
            (Split::Category { feature: f1, .. }, Split::Threshold { feature: f2, .. }) => {
                f1.cmp(f2).then(Ordering::Greater)
            }
        }
    }

    /// Evaluates the split on a raw column.
    pub fn evaluate(&self, column: &FeatureColumn, feature_name: &str) -> Result<Bits, DataError> {
        match (self, column) {
            (Split::Threshold { threshold, .. }, FeatureColumn::Numeric(v)) => {
                if !threshold.is_finite() {
                    return Err(DataError::NonFiniteThreshold { feature: feature_name.to_string() });
                }
                Ok(Bits::from_bools(v.iter().map(|x| *x <= *threshold)))
            }
            (Split::Category { category, .. }, FeatureColumn::Categorical(v)) => {
                Ok(Bits::from_bools(v.iter().map(|x| x == category)))
            }
            // A column that happened to infer as numeric can still be matched
            // against a category by value.
            (Split::Category { category, .. }, FeatureColumn::Numeric(v)) => match category.parse::<f64>() {
                Ok(c) => Ok(Bits::from_bools(v.iter().map(|x| *x == c))),
                Err(_) => Err(DataError::FeatureKindMismatch { feature: feature_name.to_string() }),
            },
            (Split::Threshold { .. }, FeatureColumn::Categorical(_)) => {
                Err(DataError::FeatureKindMismatch { feature: feature_name.to_string() })
            }
        }
    }

    pub fn describe(&self, feature_names: &[String]) -> String {
        let name = |f: usize| feature_names.get(f).cloned().unwrap_or_else(|| format!("x{f}"));
        match self {
            Split::Threshold { feature, threshold } => format!("{} <= {}", name(*feature), threshold),
            Split::Category { feature, category } => format!("{} == {}", name(*feature), category),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnProvenance {
    pub split: Split,
    /// Splits that produced a bit-identical column and were dropped.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub merged: Vec<Split>,
}

/// Sums with pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

fn validate_weights(weights: &[f64]) -> Result<f64, DataError> {
    for (i, w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(DataError::NonNumericWeight { row: i + 1, value: w.to_string() });
        }
        if *w < 0.0 {
            return Err(DataError::NegativeWeight { row: i + 1 });
        }
    }
    let total = pairwise_sum(weights);
    if total <= 0.0 {
        return Err(DataError::ZeroTotalWeight);
    }
    Ok(total)
}

/// Maps raw label strings to `0..=K`. Labels sort numerically when every
/// label parses as a number, lexicographically otherwise.
pub fn remap_labels(raw: &[String]) -> (Vec<u32>, Vec<String>) {
    let mut names: Vec<String> = raw.iter().cloned().collect::<HashSet<_>>().into_iter().collect();
    let numeric: Option<Vec<f64>> = names.iter().map(|s| s.parse::<f64>().ok()).collect();
    if numeric.is_some() {
        names.sort_by(|a, b| {
            let (x, y) = (a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap());
            x.total_cmp(&y).then_with(|| a.cmp(b))
        });
    } else {
        names.sort();
    }
    let ids = raw.iter().map(|r| names.iter().position(|n| n == r).unwrap() as u32).collect();
    (ids, names)
}

/// Rows of `(x_i, y_i, w_i)` before binarization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    table: FeatureTable,
    labels: Vec<u32>,
    label_names: Vec<String>,
    weights: Vec<f64>,
    label_column: String,
    weight_column: Option<String>,
}

impl RawDataset {
    /// Builds a dataset from raw label strings; missing weights default to 1.
    pub fn new(
        table: FeatureTable,
        raw_labels: &[String],
        weights: Option<Vec<f64>>,
        label_column: &str,
    ) -> Result<Self, DataError> {
        let (labels, label_names) = remap_labels(raw_labels);
        Self::with_label_table(table, labels, label_names, weights, label_column)
    }

    /// Builds a dataset whose labels are already ids into `label_names`.
    pub fn with_label_table(
        table: FeatureTable,
        labels: Vec<u32>,
        label_names: Vec<String>,
        weights: Option<Vec<f64>>,
        label_column: &str,
    ) -> Result<Self, DataError> {
        let n = labels.len();
        if n == 0 {
            return Err(DataError::EmptyDataset);
        }
        if table.n_rows != n {
            return Err(DataError::LengthMismatch { expected: n, found: table.n_rows });
        }
        if let Some(col) = table.columns.iter().find(|c| c.len() != n) {
            return Err(DataError::LengthMismatch { expected: n, found: col.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= label_names.len()) {
            return Err(DataError::LabelOutOfRange { label: bad, n_classes: label_names.len() });
        }
        let has_weights = weights.is_some();
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n {
            return Err(DataError::LengthMismatch { expected: n, found: weights.len() });
        }
        validate_weights(&weights)?;
        Ok(RawDataset {
            table,
            labels,
            label_names,
            weights,
            label_column: label_column.to_string(),
            weight_column: has_weights.then(|| "weight".to_string()),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.table.columns.len()
    }

    pub fn table(&self) -> &FeatureTable {
        &self.table
    }

    pub fn feature_names(&self) -> &[String] {
        &self.table.names
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn weight_column(&self) -> Option<&str> {
        self.weight_column.as_deref()
    }

    pub(crate) fn set_weight_column(&mut self, name: Option<String>) {
        self.weight_column = name;
    }

    /// Row subset (with repetition allowed); output rows carry unit weight.
    pub fn select_rows_unweighted(&self, rows: &[usize]) -> RawDataset {
        RawDataset {
            table: self.table.select(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
            weights: vec![1.0; rows.len()],
            label_column: self.label_column.clone(),
            weight_column: None,
        }
    }

    /// Same rows, new weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<RawDataset, DataError> {
        if weights.len() != self.n_rows() {
            return Err(DataError::LengthMismatch { expected: self.n_rows(), found: weights.len() });
        }
        validate_weights(&weights)?;
        let mut out = self.clone();
        out.weights = weights;
        out.weight_column.get_or_insert_with(|| "weight".to_string());
        Ok(out)
    }

    /// Writes the dataset in the ingest CSV dialect: features, label, then
    /// the weight column if present and an optional source-row column.
    pub fn write_csv<W: std::io::Write>(&self, out: W, source_rows: Option<&[usize]>) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = self.table.names.clone();
        header.push(self.label_column.clone());
        if let Some(wc) = &self.weight_column {
            header.push(wc.clone());
        }
        if source_rows.is_some() {
            header.push("source_row".to_string());
        }
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.table.columns.iter().map(|c| c.render(i)).collect();
            rec.push(self.label_names[self.labels[i] as usize].clone());
            if self.weight_column.is_some() {
                rec.push(self.weights[i].to_string());
            }
            if let Some(src) = source_rows {
                rec.push(src[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| DataError::Io { path: "<output>".into(), source: e })?;
        Ok(())
    }
}

/// The binarized covariate matrix plus labels and weights.
///
/// Columns are stored as bitvectors of length N; `labels` are class ids into
/// `label_names`; `total_weight` is computed once with pairwise summation.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarizedDataset {
    columns: Vec<Bits>,
    provenance: Vec<ColumnProvenance>,
    feature_names: Vec<String>,
    labels: Vec<u32>,
    label_names: Vec<String>,
    weights: Vec<f64>,
    total_weight: f64,
}

impl BinarizedDataset {
    pub(crate) fn from_parts(
        columns: Vec<Bits>,
        provenance: Vec<ColumnProvenance>,
        feature_names: Vec<String>,
        labels: Vec<u32>,
        label_names: Vec<String>,
        weights: Vec<f64>,
    ) -> Result<Self, DataError> {
        let n = labels.len();
        if n == 0 {
            return Err(DataError::EmptyDataset);
        }
        if weights.len() != n {
            return Err(DataError::LengthMismatch { expected: n, found: weights.len() });
        }
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(DataError::LengthMismatch { expected: n, found: c.len() });
        }
        if provenance.len() != columns.len() {
            return Err(DataError::LengthMismatch { expected: columns.len(), found: provenance.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= label_names.len()) {
            return Err(DataError::LabelOutOfRange { label: bad, n_classes: label_names.len() });
        }
        let total_weight = validate_weights(&weights)?;
        Ok(BinarizedDataset { columns, provenance, feature_names, labels, label_names, weights, total_weight })
    }

    /// Wraps already-binary columns. Column `j` is reported as feature `xj`
    /// thresholded at 0.5; labels are named by their ids. Columns are kept
    /// as given (no deduplication).
    pub fn from_columns(columns: Vec<Bits>, labels: Vec<u32>, weights: Vec<f64>) -> Result<Self, DataError> {
        let n_classes = labels.iter().copied().max().map_or(1, |m| m as usize + 1).max(1);
        let provenance = (0..columns.len())
            .map(|j| ColumnProvenance { split: Split::Threshold { feature: j, threshold: 0.5 }, merged: vec![] })
            .collect();
        let feature_names = (0..columns.len()).map(|j| format!("x{j}")).collect();
        let label_names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::from_parts(columns, provenance, feature_names, labels, label_names, weights)
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn columns(&self) -> &[Bits] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &Bits {
        &self.columns[j]
    }

    pub fn provenance(&self) -> &[ColumnProvenance] {
        &self.provenance
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn is_unit_weight(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// Same columns and labels under a new weight vector.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self, DataError> {
        Self::from_parts(
            self.columns.clone(),
            self.provenance.clone(),
            self.feature_names.clone(),
            self.labels.clone(),
            self.label_names.clone(),
            weights,
        )
    }

    /// Row subset with repetition; rows get the supplied weights.
    pub fn select_rows(&self, rows: &[usize], weights: Vec<f64>) -> Result<Self, DataError> {
        Self::from_parts(
            self.columns.iter().map(|c| c.select(rows)).collect(),
            self.provenance.clone(),
            self.feature_names.clone(),
            rows.iter().map(|&i| self.labels[i]).collect(),
            self.label_names.clone(),
            weights,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_small_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let raw: Vec<String> = ["10", "2", "2", "1"].iter().map(|s| s.to_string()).collect();
        let (ids, names) = remap_labels(&raw);
        assert_eq!(names, vec!["1", "2", "10"]);
        assert_eq!(ids, vec![2, 1, 1, 0]);
    }

    #[test]
    fn text_labels_sort_lexicographically() {
        let raw: Vec<String> = ["yes", "no", "maybe"].iter().map(|s| s.to_string()).collect();
        let (ids, names) = remap_labels(&raw);
        assert_eq!(names, vec!["maybe", "no", "yes"]);
        assert_eq!(ids, vec![2, 1, 0]);
    }

    #[test]
    fn binarized_rejects_zero_total_weight() {
        let err = BinarizedDataset::from_columns(vec![Bits::from_str01("10")], vec![0, 1], vec![0.0, 0.0]);
        assert!(matches!(err, Err(DataError::ZeroTotalWeight)));
    }

    #[test]
    fn split_order_is_feature_then_value() {
        let a = Split::Threshold { feature: 0, threshold: 3.0 };
        let b = Split::Threshold { feature: 1, threshold: 1.0 };
        let c = Split::Threshold { feature: 0, threshold: 1.0 };
        assert_eq!(a.order(&b), Ordering::Less);
        assert_eq!(a.order(&c), Ordering::Greater);
    }
}
