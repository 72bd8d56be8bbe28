use std::collections::HashMap;

use super::{BinarizedDataset, Bits, ColumnProvenance, DataError, FeatureColumn, RawDataset, Split};
use crate::reference::ThresholdSet;

/// Midpoints between consecutive distinct sorted values.
pub(crate) fn midpoints(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
}

pub(crate) fn all_splits_for(feature: usize, column: &FeatureColumn) -> Vec<Split> {
    match column {
        FeatureColumn::Numeric(v) => {
            midpoints(v).into_iter().map(|threshold| Split::Threshold { feature, threshold }).collect()
        }
        FeatureColumn::Categorical(_) => {
            column.categories().into_iter().map(|category| Split::Category { feature, category }).collect()
        }
    }
}

/// Evaluates candidate splits (already in provenance order), drops constant
/// columns and merges bit-identical ones into the first occurrence.
fn build(raw: &RawDataset, candidates: Vec<Split>) -> Result<BinarizedDataset, DataError> {
    let names = raw.feature_names();
    let mut columns: Vec<Bits> = Vec::new();
    let mut provenance: Vec<ColumnProvenance> = Vec::new();
    let mut seen: HashMap<Bits, usize> = HashMap::new();
    for split in candidates {
        let f = split.feature();
        let bits = split.evaluate(&raw.table().columns[f], &names[f])?;
        if bits.none() || bits.all() {
            continue;
        }
        if let Some(&idx) = seen.get(&bits) {
            provenance[idx].merged.push(split);
            continue;
        }
        seen.insert(bits.clone(), columns.len());
        columns.push(bits);
        provenance.push(ColumnProvenance { split, merged: vec![] });
    }
    if columns.is_empty() {
        return Err(DataError::NoInformativeColumns);
    }
    BinarizedDataset::from_parts(
        columns,
        provenance,
        names.to_vec(),
        raw.labels().to_vec(),
        raw.label_names().to_vec(),
        raw.weights().to_vec(),
    )
}

/// Binarizes every feature using all possible split points: one column per
/// midpoint for numeric features, one one-hot column per category otherwise.
pub fn binarize_all(raw: &RawDataset) -> Result<BinarizedDataset, DataError> {
    let candidates = raw
        .table()
        .columns
        .iter()
        .enumerate()
        .flat_map(|(f, c)| all_splits_for(f, c))
        .collect();
    build(raw, candidates)
}

/// Binarizes using only the supplied splits.
///
/// Numeric features get exactly the listed thresholds (none if unlisted).
/// Categorical features listed in the set get only the listed categories;
/// categorical features absent from the set keep all their one-hot columns.
pub fn binarize_guessed(raw: &RawDataset, thresholds: &ThresholdSet) -> Result<BinarizedDataset, DataError> {
    if thresholds.is_empty() {
        return Err(DataError::EmptyThresholdSet);
    }
    let names = raw.feature_names();
    let columns = &raw.table().columns;
    let mut listed = vec![Vec::new(); columns.len()];
    for split in thresholds.splits() {
        let f = split.feature();
        let column = columns.get(f).ok_or(DataError::UnknownFeature { feature: f })?;
        match (split, column) {
            (Split::Threshold { threshold, .. }, FeatureColumn::Numeric(_)) => {
                if !threshold.is_finite() {
                    return Err(DataError::NonFiniteThreshold { feature: names[f].clone() });
                }
            }
            (Split::Category { category, .. }, FeatureColumn::Categorical(_)) => {
                if !column.categories().contains(category) {
                    return Err(DataError::UnknownCategory { feature: names[f].clone(), category: category.clone() });
                }
            }
            _ => return Err(DataError::FeatureKindMismatch { feature: names[f].clone() }),
        }
        listed[f].push(split.clone());
    }
    let mut candidates = Vec::new();
    for (f, column) in columns.iter().enumerate() {
        let mut splits = if listed[f].is_empty() && !column.is_numeric() {
            all_splits_for(f, column)
        } else {
            std::mem::take(&mut listed[f])
        };
        splits.sort_by(|a, b| a.order(b));
        candidates.extend(splits);
    }
    build(raw, candidates)
}
