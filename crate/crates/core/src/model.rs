//! Decision trees over binarized columns and their JSON model files.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BinarizedDataset, Bits, Split};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("tree references column {column}, dataset has {n_columns}")]
    ColumnOutOfRange { column: usize, n_columns: usize },
    #[error("model schema_version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("malformed model file: {0}")]
    MalformedModel(String),
}

/// A tree node. Samples whose column bit is 1 go to `one`, the rest to `zero`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf { class: u32 },
    Split { column: usize, zero: Box<Node>, one: Box<Node> },
}

impl Node {
    pub fn leaf(class: u32) -> Node {
        Node::Leaf { class }
    }

    pub fn split(column: usize, zero: Node, one: Node) -> Node {
        Node::Split { column, zero: Box::new(zero), one: Box::new(one) }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { zero, one, .. } => zero.leaf_count() + one.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { zero, one, .. } => 1 + zero.depth().max(one.depth()),
        }
    }

    fn max_column(&self) -> Option<usize> {
        match self {
            Node::Leaf { .. } => None,
            Node::Split { column, zero, one } => {
                Some((*column).max(zero.max_column().unwrap_or(0)).max(one.max_column().unwrap_or(0)))
            }
        }
    }

    /// Columns in preorder (duplicates kept).
    pub fn columns_used(&self, out: &mut Vec<usize>) {
        if let Node::Split { column, zero, one } = self {
            out.push(*column);
            zero.columns_used(out);
            one.columns_used(out);
        }
    }

    /// Routes one sample, `bit(column)` giving its value on a column.
    pub fn route(&self, bit: impl Fn(usize) -> bool) -> u32 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { class } => return *class,
                Node::Split { column, zero, one } => node = if bit(*column) { one } else { zero },
            }
        }
    }

    /// Merges sibling leaves that predict the same class, bottom-up.
    pub fn collapse(self) -> Node {
        match self {
            Node::Leaf { .. } => self,
            Node::Split { column, zero, one } => {
                let zero = zero.collapse();
                let one = one.collapse();
                match (&zero, &one) {
                    (Node::Leaf { class: a }, Node::Leaf { class: b }) if a == b => Node::Leaf { class: *a },
                    _ => Node::Split { column, zero: Box::new(zero), one: Box::new(one) },
                }
            }
        }
    }

    /// True if some split has two leaf children with the same class.
    pub fn has_collapsible_split(&self) -> bool {
        match self {
            Node::Leaf { .. } => false,
            Node::Split { zero, one, .. } => match (zero.as_ref(), one.as_ref()) {
                (Node::Leaf { class: a }, Node::Leaf { class: b }) if a == b => true,
                _ => zero.has_collapsible_split() || one.has_collapsible_split(),
            },
        }
    }

    /// Lexicographic order of preorder token sequences, with tokens ordered
    /// `Leaf(class) < Split(column)`, classes and columns ascending, and the
    /// zero child visited before the one child. The encoding is prefix-free,
    /// so the order composes over subtrees.
    pub fn preorder_cmp(&self, other: &Node) -> Ordering {
        match (self, other) {
            (Node::Leaf { class: a }, Node::Leaf { class: b }) => a.cmp(b),
            (Node::Leaf { .. }, Node::Split { .. }) => Ordering::Less,
            (Node::Split { .. }, Node::Leaf { .. }) => Ordering::Greater,
            (Node::Split { column: c1, zero: z1, one: o1 }, Node::Split { column: c2, zero: z2, one: o2 }) => {
                c1.cmp(c2).then_with(|| z1.preorder_cmp(z2)).then_with(|| o1.preorder_cmp(o2))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tree {
    pub root: Node,
}

impl Tree {
    pub fn new(root: Node) -> Self {
        Tree { root }
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn validate(&self, n_columns: usize) -> Result<(), ModelError> {
        match self.root.max_column() {
            Some(c) if c >= n_columns => Err(ModelError::ColumnOutOfRange { column: c, n_columns }),
            _ => Ok(()),
        }
    }

    /// Predicted class of every sample.
    pub fn predict(&self, ds: &BinarizedDataset) -> Result<Vec<u32>, ModelError> {
        self.validate(ds.n_columns())?;
        let cols = ds.columns();
        Ok((0..ds.n_samples()).map(|i| self.root.route(|c| cols[c].get(i))).collect())
    }

    /// Predictions over arbitrary column storage, `columns[c]` being the bits
    /// of column `c` (columns the tree never uses may be empty).
    pub fn predict_columns(&self, columns: &[Bits], n_samples: usize) -> Vec<u32> {
        (0..n_samples).map(|i| self.root.route(|c| columns[c].get(i))).collect()
    }

    pub fn collapse(self) -> Tree {
        Tree { root: self.root.collapse() }
    }
}

/// A column referenced by the tree, resolvable against raw features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsedColumn {
    pub column: usize,
    pub feature_name: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub lambda: f64,
    pub depth_limit: usize,
    pub mode: String,
    pub kernel: String,
    pub binarization: String,
    pub objective: f64,
    pub weighted_loss: f64,
    pub leaves: usize,
    pub depth: usize,
    pub optimality: String,
    pub n_samples: usize,
    pub n_columns: usize,
    pub dataset_fingerprint: String,
}

/// Serialized model. Field order here is the on-disk order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub tree: Tree,
    pub columns: Vec<UsedColumn>,
    pub label_column: String,
    pub label_names: Vec<String>,
    pub training: TrainingMetadata,
}

impl ModelFile {
    /// Collects provenance for every column the tree uses.
    pub fn used_columns(tree: &Tree, ds: &BinarizedDataset) -> Vec<UsedColumn> {
        let mut cols = Vec::new();
        tree.root.columns_used(&mut cols);
        cols.sort_unstable();
        cols.dedup();
        cols.into_iter()
            .map(|c| {
                let split = ds.provenance()[c].split.clone();
                let feature_name = ds.feature_names()[split.feature()].clone();
                UsedColumn { column: c, feature_name, split }
            })
            .collect()
    }
}

pub fn serialize(model: &ModelFile) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(model).expect("model serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

pub fn deserialize(bytes: &[u8]) -> Result<ModelFile, ModelError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| ModelError::MalformedModel(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ModelError::MalformedModel("missing schema_version".into()))?;
    if version != MODEL_SCHEMA_VERSION as u64 {
        return Err(ModelError::SchemaVersionMismatch { found: version, expected: MODEL_SCHEMA_VERSION });
    }
    let model: ModelFile = serde_json::from_value(value).map_err(|e| ModelError::MalformedModel(e.to_string()))?;
    let known: Vec<usize> = model.columns.iter().map(|c| c.column).collect();
    let mut used = Vec::new();
    model.tree.root.columns_used(&mut used);
    if let Some(c) = used.iter().find(|c| !known.contains(c)) {
        return Err(ModelError::MalformedModel(format!("column {c} has no provenance entry")));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xor_ds() -> BinarizedDataset {
        BinarizedDataset::from_columns(
            vec![Bits::from_str01("0011"), Bits::from_str01("0101")],
            vec![0, 1, 1, 0],
            vec![1.0; 4],
        )
        .unwrap()
    }

    fn xor_tree() -> Tree {
        Tree::new(Node::split(
            0,
            Node::split(1, Node::leaf(0), Node::leaf(1)),
            Node::split(1, Node::leaf(1), Node::leaf(0)),
        ))
    }

    #[test]
    fn constant_leaf_predicts_everywhere() {
        assert_eq!(Tree::new(Node::leaf(1)).predict(&xor_ds()).unwrap(), vec![1; 4]);
    }

    #[test]
    fn stump_routes_by_bits() {
        let t = Tree::new(Node::split(0, Node::leaf(0), Node::leaf(1)));
        assert_eq!(t.predict(&xor_ds()).unwrap(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn xor_tree_matches_labels() {
        assert_eq!(xor_tree().predict(&xor_ds()).unwrap(), vec![0, 1, 1, 0]);
    }

    #[test]
    fn predict_rejects_bad_column() {
        let t = Tree::new(Node::split(5, Node::leaf(0), Node::leaf(1)));
        assert!(matches!(t.predict(&xor_ds()), Err(ModelError::ColumnOutOfRange { column: 5, n_columns: 2 })));
    }

    #[test]
    fn counts_and_depths() {
        let leaf = Tree::new(Node::leaf(0));
        assert_eq!((leaf.leaf_count(), leaf.depth()), (1, 0));
        let stump = Tree::new(Node::split(0, Node::leaf(0), Node::leaf(1)));
        assert_eq!((stump.leaf_count(), stump.depth()), (2, 1));
        assert_eq!((xor_tree().leaf_count(), xor_tree().depth()), (4, 2));
    }

    #[test]
    fn collapse_merges_equal_siblings_recursively() {
        let t = Tree::new(Node::split(
            0,
            Node::split(1, Node::leaf(1), Node::leaf(1)),
            Node::leaf(1),
        ));
        assert_eq!(t.collapse(), Tree::new(Node::leaf(1)));
    }

    #[test]
    fn preorder_order_prefers_leaves_and_small_columns() {
        let a = Node::split(0, Node::leaf(0), Node::leaf(1));
        let b = Node::split(1, Node::leaf(0), Node::leaf(1));
        let c = Node::split(0, Node::leaf(1), Node::leaf(0));
        assert_eq!(a.preorder_cmp(&b), Ordering::Less);
        assert_eq!(a.preorder_cmp(&c), Ordering::Less);
        assert_eq!(Node::leaf(3).preorder_cmp(&a), Ordering::Less);
        assert_eq!(a.preorder_cmp(&a.clone()), Ordering::Equal);
    }

    fn sample_model(tree: Tree) -> ModelFile {
        ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            columns: {
                let mut cols = Vec::new();
                tree.root.columns_used(&mut cols);
                cols.sort_unstable();
                cols.dedup();
                cols.into_iter()
                    .map(|c| UsedColumn {
                        column: c,
                        feature_name: format!("x{c}"),
                        split: Split::Threshold { feature: c, threshold: 0.5 },
                    })
                    .collect()
            },
            tree,
            label_column: "y".into(),
            label_names: vec!["0".into(), "1".into(), "2".into()],
            training: TrainingMetadata {
                lambda: 0.01,
                depth_limit: 3,
                mode: "exact".into(),
                kernel: "bitcount".into(),
                binarization: "all".into(),
                objective: 0.25,
                weighted_loss: 0.21,
                leaves: 4,
                depth: 2,
                optimality: "proved-optimal".into(),
                n_samples: 10,
                n_columns: 4,
                dataset_fingerprint: "abc".into(),
            },
        }
    }

    #[test]
    fn truncated_file_is_malformed() {
        let bytes = serialize(&sample_model(xor_tree()));
        let err = deserialize(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, ModelError::MalformedModel(_)));
    }

    #[test]
    fn bumped_version_is_rejected() {
        let mut v: serde_json::Value = serde_json::from_slice(&serialize(&sample_model(xor_tree()))).unwrap();
        v["schema_version"] = serde_json::json!(MODEL_SCHEMA_VERSION + 1);
        let err = deserialize(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(matches!(err, ModelError::SchemaVersionMismatch { found: 2, .. }));
    }

    fn node_strategy() -> impl Strategy<Value = Node> {
        let leaf = (0u32..3).prop_map(Node::leaf);
        leaf.prop_recursive(4, 16, 2, |inner| {
            (0usize..6, inner.clone(), inner).prop_map(|(c, z, o)| Node::split(c, z, o))
        })
    }

    proptest! {
        #[test]
        fn model_round_trips(root in node_strategy()) {
            let m = sample_model(Tree::new(root));
            prop_assert_eq!(deserialize(&serialize(&m)).unwrap(), m);
        }

        #[test]
        fn leaves_bounded_by_depth(root in node_strategy()) {
            let t = Tree::new(root);
            prop_assert!(t.leaf_count() <= 1 << t.depth());
            let c = t.clone().collapse();
            prop_assert!(!c.root.has_collapsible_split());
            prop_assert!(c.leaf_count() <= t.leaf_count());
        }
    }
}
