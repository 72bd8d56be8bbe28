//! Reference models: a weighted Gini tree learner, a one-vs-rest boosted
//! variant, and row-aligned prediction files from external models.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{read_input, BinarizedDataset, Bits, DataError, RawDataset, Split};
use crate::model::Node;
use crate::objective::{ObjectiveError, ReferencePredictions};

pub const THRESHOLDS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("reference file has {found} rows, dataset has {expected}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("reference row {row}: unknown label {label:?}")]
    UnknownLabel { row: usize, label: String },
    #[error("invalid reference configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed threshold file: {0}")]
    MalformedThresholds(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Split points proposed by a reference model, kept sorted and unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ThresholdSet {
    splits: Vec<Split>,
}

#[derive(Serialize, Deserialize)]
struct ThresholdFile {
    schema_version: u32,
    #[serde(default)]
    feature_names: Vec<String>,
    splits: Vec<Split>,
}

impl ThresholdSet {
    pub fn new(mut splits: Vec<Split>) -> Self {
        splits.sort_by(|a, b| a.order(b));
        splits.dedup_by(|a, b| a.order(b).is_eq());
        ThresholdSet { splits }
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    /// Every candidate split `binarize_all` would consider.
    pub fn all_midpoints(raw: &RawDataset) -> Self {
        ThresholdSet::new(
            raw.table()
                .columns
                .iter()
                .enumerate()
                .flat_map(|(f, c)| crate::data::all_splits_for(f, c))
                .collect(),
        )
    }

    pub fn to_json(&self, feature_names: &[String]) -> Vec<u8> {
        let file = ThresholdFile {
            schema_version: THRESHOLDS_SCHEMA_VERSION,
            feature_names: feature_names.to_vec(),
            splits: self.splits.clone(),
        };
        let mut out = serde_json::to_vec_pretty(&file).expect("threshold serialization cannot fail");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ReferenceError> {
        let file: ThresholdFile =
            serde_json::from_slice(bytes).map_err(|e| ReferenceError::MalformedThresholds(e.to_string()))?;
        if file.schema_version != THRESHOLDS_SCHEMA_VERSION {
            return Err(ReferenceError::MalformedThresholds(format!(
                "unsupported schema_version {}",
                file.schema_version
            )));
        }
        Ok(ThresholdSet::new(file.splits))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub max_depth: usize,
    pub min_leaf_weight: f64,
    /// Boosting rounds per class; 1 fits a single tree.
    pub rounds: usize,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig { max_depth: 3, min_leaf_weight: 0.0, rounds: 1 }
    }
}

impl GreedyConfig {
    fn validate(&self) -> Result<(), ReferenceError> {
        if self.max_depth < 1 {
            return Err(ReferenceError::InvalidConfig("max_depth must be at least 1".into()));
        }
        if self.rounds < 1 {
            return Err(ReferenceError::InvalidConfig("rounds must be at least 1".into()));
        }
        if !(self.min_leaf_weight.is_finite() && self.min_leaf_weight >= 0.0) {
            return Err(ReferenceError::InvalidConfig("min_leaf_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceFit {
    pub predictions: ReferencePredictions,
    pub thresholds: ThresholdSet,
    /// Binarized columns split on by any fitted tree, ascending.
    pub columns_used: Vec<usize>,
    /// The fitted trees; one for `rounds == 1`, otherwise every weak learner.
    pub trees: Vec<Node>,
}

fn class_masses(s: &Bits, labels: &[u32], weights: &[f64], n_classes: usize) -> Vec<f64> {
    let mut m = vec![0.0; n_classes];
    for i in s.iter_ones() {
        m[labels[i] as usize] += weights[i];
    }
    m
}

/// Mass-weighted Gini impurity `M * (1 - Σ (m_c / M)^2)`.
fn impurity(masses: &[f64]) -> f64 {
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    total - masses.iter().map(|m| m * m).sum::<f64>() / total
}

fn majority(masses: &[f64]) -> u32 {
    let mut best = 0;
    for c in 1..masses.len() {
        if masses[c] > masses[best] {
            best = c;
        }
    }
    best as u32
}

struct Grower<'a> {
    columns: &'a [Bits],
    labels: &'a [u32],
    weights: &'a [f64],
    n_classes: usize,
    min_leaf_weight: f64,
}

impl Grower<'_> {
    fn grow(&self, s: &Bits, depth: usize) -> Node {
        let masses = class_masses(s, self.labels, self.weights, self.n_classes);
        let leaf = Node::leaf(majority(&masses));
        let total: f64 = masses.iter().sum();
        let parent = impurity(&masses);
        if depth == 0 || parent <= 0.0 {
            return leaf;
        }
        let tol = 1e-12 * total.max(f64::MIN_POSITIVE);
        let mut best: Option<(usize, f64)> = None;
        for (j, col) in self.columns.iter().enumerate() {
            let one = s.and(col);
            let zero = s.and_not(col);
            if one.none() || zero.none() {
                continue;
            }
            let m1 = class_masses(&one, self.labels, self.weights, self.n_classes);
            let m0 = class_masses(&zero, self.labels, self.weights, self.n_classes);
            let (t1, t0): (f64, f64) = (m1.iter().sum(), m0.iter().sum());
            if t1 < self.min_leaf_weight || t0 < self.min_leaf_weight {
                continue;
            }
            let gain = parent - impurity(&m0) - impurity(&m1);
            if gain <= tol {
                continue;
            }
            if best.is_none_or(|(_, g)| gain > g + tol) {
                best = Some((j, gain));
            }
        }
        match best {
            None => leaf,
            Some((j, _)) => {
                let col = &self.columns[j];
                Node::split(j, self.grow(&s.and_not(col), depth - 1), self.grow(&s.and(col), depth - 1))
            }
        }
    }
}

fn route_all(tree: &Node, columns: &[Bits], n: usize) -> Vec<u32> {
    (0..n).map(|i| tree.route(|c| columns[c].get(i))).collect()
}

/// Fits the built-in reference model and returns its training predictions
/// and the splits it used.
pub fn fit_greedy(ds: &BinarizedDataset, cfg: &GreedyConfig) -> Result<ReferenceFit, ReferenceError> {
    cfg.validate()?;
    let n = ds.n_samples();
    let all = Bits::ones(n);
    let mut trees = Vec::new();
    let preds = if cfg.rounds == 1 {
        let grower = Grower {
            columns: ds.columns(),
            labels: ds.labels(),
            weights: ds.weights(),
            n_classes: ds.n_classes(),
            min_leaf_weight: cfg.min_leaf_weight,
        };
        let tree = grower.grow(&all, cfg.max_depth);
        let preds = route_all(&tree, ds.columns(), n);
        trees.push(tree);
        preds
    } else {
        let mut scores = vec![vec![0.0f64; ds.n_classes()]; n];
        for k in 0..ds.n_classes() as u32 {
            let binary: Vec<u32> = ds.labels().iter().map(|&y| u32::from(y == k)).collect();
            let total = ds.total_weight();
            let mut d: Vec<f64> = ds.weights().iter().map(|w| w / total).collect();
            for _ in 0..cfg.rounds {
                let grower = Grower {
                    columns: ds.columns(),
                    labels: &binary,
                    weights: &d,
                    n_classes: 2,
                    min_leaf_weight: cfg.min_leaf_weight,
                };
                let tree = grower.grow(&all, cfg.max_depth);
                let h = route_all(&tree, ds.columns(), n);
                let err: f64 = (0..n).filter(|&i| h[i] != binary[i]).map(|i| d[i]).sum();
                if err >= 0.5 {
                    break;
                }
                let alpha = if err <= 1e-12 { 10.0 } else { (0.5 * ((1.0 - err) / err).ln()).min(10.0) };
                for i in 0..n {
                    scores[i][k as usize] += if h[i] == 1 { alpha } else { -alpha };
                    let agree = h[i] == binary[i];
                    d[i] *= if agree { (-alpha).exp() } else { alpha.exp() };
                }
                let z: f64 = d.iter().sum();
                d.iter_mut().for_each(|x| *x /= z);
                trees.push(tree);
                if err <= 1e-12 {
                    break;
                }
            }
        }
        scores
            .iter()
            .map(|s| {
                let mut best = 0;
                for c in 1..s.len() {
                    if s[c] > s[best] {
                        best = c;
                    }
                }
                best as u32
            })
            .collect()
    };

    let mut columns_used = Vec::new();
    for t in &trees {
        t.columns_used(&mut columns_used);
    }
    columns_used.sort_unstable();
    columns_used.dedup();
    let thresholds = ThresholdSet::new(columns_used.iter().map(|&c| ds.provenance()[c].split.clone()).collect());
    Ok(ReferenceFit { predictions: ReferencePredictions::new(preds, ds)?, thresholds, columns_used, trees })
}

/// Parses a one-column CSV of predicted labels (with a header row), matching
/// label text against the dataset's label names.
pub fn load_reference_bytes(bytes: &[u8], ds: &BinarizedDataset) -> Result<ReferencePredictions, ReferenceError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(bytes);
    let mut preds = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let label = rec.get(0).unwrap_or("");
        let id = ds
            .label_names()
            .iter()
            .position(|n| n == label)
            .or_else(|| {
                // tolerate "1.0" for a label named "1"
                let x = label.parse::<f64>().ok()?;
                ds.label_names().iter().position(|n| n.parse::<f64>().ok() == Some(x))
            })
            .ok_or_else(|| ReferenceError::UnknownLabel { row: i + 1, label: label.to_string() })?;
        preds.push(id as u32);
    }
    if preds.len() != ds.n_samples() {
        return Err(ReferenceError::RowCountMismatch { expected: ds.n_samples(), found: preds.len() });
    }
    Ok(ReferencePredictions::new(preds, ds)?)
}

pub fn load_reference(path: &Path, ds: &BinarizedDataset) -> Result<ReferencePredictions, ReferenceError> {
    load_reference_bytes(&read_input(path)?, ds)
}

/// Writes predictions as a one-column CSV readable by [`load_reference`].
pub fn write_reference_csv(preds: &[u32], label_names: &[String]) -> Result<Vec<u8>, ReferenceError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["prediction"])?;
    for &p in preds {
        w.write_record([&label_names[p as usize]])?;
    }
    w.into_inner().map_err(|e| ReferenceError::Csv(e.into_error().into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{binarize_all, ingest_bytes, IngestOptions};

    fn ds(cols: &[&str], labels: &[u32], weights: &[f64]) -> BinarizedDataset {
        BinarizedDataset::from_columns(cols.iter().map(|c| Bits::from_str01(c)).collect(), labels.to_vec(), weights.to_vec())
            .unwrap()
    }

    fn error_rate(fit: &ReferenceFit) -> f64 {
        let m = fit.predictions.mismatch_mask();
        m.count_ones() as f64 / m.len() as f64
    }

    #[test]
    fn separable_stump() {
        let d = ds(&["0101", "0011"], &[0, 0, 1, 1], &[1.0; 4]);
        let fit = fit_greedy(&d, &GreedyConfig { max_depth: 1, ..Default::default() }).unwrap();
        assert_eq!(error_rate(&fit), 0.0);
        assert_eq!(fit.thresholds.len(), 1);
        assert_eq!(fit.columns_used, vec![1]);
    }

    #[test]
    fn constant_labels_give_single_leaf() {
        let d = ds(&["0101"], &[1, 1, 1, 1], &[1.0; 4]);
        let fit = fit_greedy(&d, &GreedyConfig::default()).unwrap();
        assert!(fit.thresholds.is_empty());
        assert_eq!(fit.trees, vec![Node::leaf(1)]);
    }

    #[test]
    fn xor_defeats_depth_one() {
        let d = ds(&["0011", "0101"], &[0, 1, 1, 0], &[1.0; 4]);
        let fit = fit_greedy(&d, &GreedyConfig { max_depth: 1, ..Default::default() }).unwrap();
        assert_eq!(error_rate(&fit), 0.5);
        assert!(fit.thresholds.is_empty());
    }

    #[test]
    fn boosting_is_no_worse_than_a_stump_here() {
        let d = ds(&["00110011", "01010101", "00001111"], &[0, 0, 1, 1, 0, 1, 1, 1], &[1.0; 8]);
        let single = fit_greedy(&d, &GreedyConfig { max_depth: 1, rounds: 1, ..Default::default() }).unwrap();
        let boosted = fit_greedy(&d, &GreedyConfig { max_depth: 1, rounds: 20, ..Default::default() }).unwrap();
        assert!(error_rate(&boosted) <= error_rate(&single));
        assert!(boosted.trees.len() > 1);
    }

    #[test]
    fn min_leaf_weight_blocks_small_children() {
        let d = ds(&["1000"], &[1, 0, 0, 0], &[1.0; 4]);
        let fit = fit_greedy(&d, &GreedyConfig { max_depth: 1, min_leaf_weight: 2.0, rounds: 1 }).unwrap();
        assert!(fit.thresholds.is_empty());
    }

    #[test]
    fn weights_equal_duplication() {
        let cols = ["0011010", "0101100", "0110011"];
        let labels = [0, 1, 1, 0, 1, 0, 1];
        let counts = [3usize, 1, 2, 1, 4, 1, 2];
        let weighted = ds(&cols, &labels, &counts.map(|c| c as f64));
        let rows: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect();
        let dup = weighted.select_rows(&rows, vec![1.0; rows.len()]).unwrap();
        let cfg = GreedyConfig { max_depth: 2, ..Default::default() };
        let a = fit_greedy(&weighted, &cfg).unwrap();
        let b = fit_greedy(&dup, &cfg).unwrap();
        assert_eq!(a.trees, b.trees);
    }

    #[test]
    fn thresholds_come_from_the_candidate_pool() {
        let csv = "a,b,y\n1,3,0\n2,1,1\n3,2,0\n4,5,1\n5,4,1\n";
        let raw = ingest_bytes(csv.as_bytes(), &IngestOptions { label: "y".into(), ..Default::default() }).unwrap();
        let bin = binarize_all(&raw).unwrap();
        let fit = fit_greedy(&bin, &GreedyConfig { max_depth: 2, ..Default::default() }).unwrap();
        let pool = ThresholdSet::all_midpoints(&raw);
        for s in fit.thresholds.splits() {
            assert!(pool.splits().iter().any(|p| p.order(s).is_eq()));
        }
    }

    #[test]
    fn threshold_json_round_trip() {
        let set = ThresholdSet::new(vec![
            Split::Threshold { feature: 1, threshold: 2.5 },
            Split::Category { feature: 0, category: "x".into() },
            Split::Threshold { feature: 1, threshold: 2.5 },
        ]);
        assert_eq!(set.len(), 2);
        let back = ThresholdSet::from_json(&set.to_json(&["c".into(), "a".into()])).unwrap();
        assert_eq!(back, set);
        assert!(ThresholdSet::from_json(b"{\"schema_version\": 9, \"splits\": []}").is_err());
    }

    #[test]
    fn load_reference_examples() {
        let d = ds(&["0011"], &[0, 1, 1, 0], &[1.0; 4]);
        let exact = load_reference_bytes(b"p\n0\n1\n1\n0\n", &d).unwrap();
        assert!(exact.mismatch_mask().none());
        let one_wrong = load_reference_bytes(b"p\n0\n1\n0\n0\n", &d).unwrap();
        assert_eq!(one_wrong.mismatch_mask().count_ones(), 1);
        assert!(matches!(
            load_reference_bytes(b"p\n0\n1\n1\n", &d),
            Err(ReferenceError::RowCountMismatch { expected: 4, found: 3 })
        ));
        assert!(matches!(load_reference_bytes(b"p\n0\n1\n7\n0\n", &d), Err(ReferenceError::UnknownLabel { row: 3, .. })));
    }

    #[test]
    fn reference_csv_round_trip() {
        let d = ds(&["0011"], &[0, 1, 1, 0], &[1.0; 4]);
        let bytes = write_reference_csv(&[1, 1, 0, 0], d.label_names()).unwrap();
        assert_eq!(load_reference_bytes(&bytes, &d).unwrap().preds(), &[1, 1, 0, 0]);
    }
}
