//! Exhaustive optimizers for small instances. Neither shares any pruning or
//! caching logic with the search module.

use std::cmp::Ordering;

use crate::data::{BinarizedDataset, Bits};
use crate::model::{Node, Tree};
use crate::objective::{cmp_cost, leaf_cost, objective, split_cost, KernelMode, LossKernel};

use super::OracleError;

pub const MAX_COLUMNS: usize = 6;
pub const MAX_DEPTH: usize = 3;

/// Unlabelled binary tree shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Shape {
    Leaf,
    Split(Box<Shape>, Box<Shape>),
}

impl Shape {
    pub fn internal_nodes(&self) -> usize {
        match self {
            Shape::Leaf => 0,
            Shape::Split(a, b) => 1 + a.internal_nodes() + b.internal_nodes(),
        }
    }
}

/// Every shape of depth at most `d`: 1, 2, 5, 26 shapes for d = 0..=3.
pub fn shapes(d: usize) -> Vec<Shape> {
    if d == 0 {
        return vec![Shape::Leaf];
    }
    let smaller = shapes(d - 1);
    let mut out = vec![Shape::Leaf];
    for a in &smaller {
        for b in &smaller {
            out.push(Shape::Split(Box::new(a.clone()), Box::new(b.clone())));
        }
    }
    out
}

struct Evaluated {
    cost: f64,
    tree: Node,
}

/// Labels each leaf with its weighted-majority class (class 0 when empty)
/// and sums costs bottom-up. `cols` holds the column of each internal node
/// in preorder.
fn evaluate(shape: &Shape, cols: &[usize], next: &mut usize, s: &Bits, ds: &BinarizedDataset, kernel: &LossKernel, pen: f64) -> Evaluated {
    match shape {
        Shape::Leaf => {
            let (class, loss) = if s.none() { (0, 0.0) } else { kernel.leaf(s) };
            Evaluated { cost: leaf_cost(loss, pen), tree: Node::leaf(class) }
        }
        Shape::Split(a, b) => {
            let j = cols[*next];
            *next += 1;
            let col = ds.column(j);
            let zero = evaluate(a, cols, next, &s.and_not(col), ds, kernel, pen);
            let one = evaluate(b, cols, next, &s.and(col), ds, kernel, pen);
            Evaluated { cost: split_cost(zero.cost, one.cost), tree: Node::split(j, zero.tree, one.tree) }
        }
    }
}

/// Global tie-break: cost, then leaves, then depth, then preorder encoding.
fn order(a: &Evaluated, b: &Evaluated, total: f64) -> Ordering {
    cmp_cost(a.cost, b.cost, total)
        .then(a.tree.leaf_count().cmp(&b.tree.leaf_count()))
        .then(a.tree.depth().cmp(&b.tree.depth()))
        .then_with(|| a.tree.preorder_cmp(&b.tree))
}

/// Minimizes weighted loss plus `lambda` per leaf over every tree of depth at
/// most `d`, by enumerating shapes and then all column assignments.
pub fn brute_force(ds: &BinarizedDataset, d: usize, lambda: f64) -> Result<(f64, Tree), OracleError> {
    let m = ds.n_columns();
    if m > MAX_COLUMNS || d > MAX_DEPTH {
        return Err(OracleError::TooLargeToEnumerate { columns: m, depth: d });
    }
    let kernel = LossKernel::new(ds, KernelMode::WeightedDot)?;
    let pen = lambda * ds.total_weight();
    let root = Bits::ones(ds.n_samples());
    let mut best: Option<Evaluated> = None;
    for shape in shapes(d) {
        let k = shape.internal_nodes();
        if k > 0 && m == 0 {
            continue;
        }
        let mut cols = vec![0usize; k];
        loop {
            let cand = evaluate(&shape, &cols, &mut 0, &root, ds, &kernel, pen);
            if best.as_ref().is_none_or(|b| order(&cand, b, ds.total_weight()) == Ordering::Less) {
                best = Some(cand);
            }
            // odometer over column assignments
            let mut pos = 0;
            while pos < k {
                cols[pos] += 1;
                if cols[pos] < m {
                    break;
                }
                cols[pos] = 0;
                pos += 1;
            }
            if pos == k {
                break;
            }
        }
    }
    let tree = Tree::new(best.expect("at least the single leaf is enumerated").tree).collapse();
    Ok((objective(&tree, ds, lambda)?, tree))
}

/// Minimum objective found by a second, independent enumeration: every
/// tree is built recursively (a leaf, or any column over any pair of
/// smaller trees), samples are routed one at a time, and each leaf takes its
/// per-sample weighted majority.
pub fn brute_force_recursive(ds: &BinarizedDataset, d: usize, lambda: f64) -> Result<f64, OracleError> {
    let m = ds.n_columns();
    if m > 4 || d > MAX_DEPTH {
        return Err(OracleError::TooLargeToEnumerate { columns: m, depth: d });
    }
    fn all_trees(d: usize, m: usize) -> Vec<Node> {
        let mut out = vec![Node::leaf(0)];
        if d == 0 {
            return out;
        }
        let sub = all_trees(d - 1, m);
        for j in 0..m {
            for a in &sub {
                for b in &sub {
                    out.push(Node::split(j, a.clone(), b.clone()));
                }
            }
        }
        out
    }
    fn leaf_index(node: &Node, ds: &BinarizedDataset, i: usize, acc: usize) -> (usize, usize) {
        // returns (leaf id in preorder, leaves in this subtree)
        match node {
            Node::Leaf { .. } => (acc, 1),
            Node::Split { column, zero, one } => {
                let zero_leaves = zero.leaf_count();
                if ds.column(*column).get(i) {
                    let (id, _) = leaf_index(one, ds, i, acc + zero_leaves);
                    (id, zero_leaves + one.leaf_count())
                } else {
                    let (id, _) = leaf_index(zero, ds, i, acc);
                    (id, zero_leaves + one.leaf_count())
                }
            }
        }
    }
    let k = ds.n_classes();
    let total: f64 = ds.weights().iter().sum();
    let mut best = f64::INFINITY;
    for t in all_trees(d, m) {
        let h = t.leaf_count();
        let mut mass = vec![vec![0.0f64; k]; h];
        for i in 0..ds.n_samples() {
            let (leaf, _) = leaf_index(&t, ds, i, 0);
            mass[leaf][ds.labels()[i] as usize] += ds.weights()[i];
        }
        let mut loss = 0.0;
        for per_class in &mass {
            let leaf_total: f64 = per_class.iter().sum();
            let kept = per_class.iter().copied().fold(0.0, f64::max);
            loss += leaf_total - kept;
        }
        let value = loss / total + lambda * h as f64;
        if value < best {
            best = value;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(cols: &[&str], labels: &[u32], weights: &[f64]) -> BinarizedDataset {
        BinarizedDataset::from_columns(cols.iter().map(|c| Bits::from_str01(c)).collect(), labels.to_vec(), weights.to_vec())
            .unwrap()
    }

    #[test]
    fn shape_counts() {
        assert_eq!(shapes(0).len(), 1);
        assert_eq!(shapes(1).len(), 2);
        assert_eq!(shapes(2).len(), 5);
        assert_eq!(shapes(3).len(), 26);
    }

    #[test]
    fn one_column_depth_one() {
        let d = ds(&["0011"], &[0, 0, 1, 0], &[1.0; 4]);
        // leaf: 1 error; stump: 1 error with 2 leaves -> leaf wins
        let (v, t) = brute_force(&d, 1, 0.0).unwrap();
        assert_eq!(v, 0.25);
        assert_eq!(t.leaf_count(), 1);
        let d = ds(&["0011"], &[0, 0, 1, 1], &[1.0; 4]);
        let (v, t) = brute_force(&d, 1, 0.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(t.root, Node::split(0, Node::leaf(0), Node::leaf(1)));
    }

    #[test]
    fn xor_is_separable_at_depth_two() {
        let d = ds(&["0011", "0101"], &[0, 1, 1, 0], &[1.0; 4]);
        assert_eq!(brute_force(&d, 2, 0.0).unwrap().0, 0.0);
        assert_eq!(brute_force(&d, 1, 0.0).unwrap().0, 0.5);
        assert!((brute_force(&d, 2, 0.01).unwrap().0 - 0.04).abs() < 1e-15);
        let w = ds(&["0011", "0101"], &[0, 1, 1, 0], &[10.0, 1.0, 1.0, 10.0]);
        assert!((brute_force(&w, 1, 0.0).unwrap().0 - 2.0 / 22.0).abs() < 1e-15);
    }

    #[test]
    fn enumerators_agree_on_small_instances() {
        let d = ds(&["00110101", "01010011", "11100100"], &[0, 1, 1, 0, 2, 1, 0, 2], &[1.0, 2.0, 0.5, 1.5, 3.0, 1.0, 1.0, 0.25]);
        for depth in 0..=3 {
            for lambda in [0.0, 0.02, 0.1] {
                let a = brute_force(&d, depth, lambda).unwrap().0;
                let b = brute_force_recursive(&d, depth, lambda).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.max(1.0), "depth {depth} lambda {lambda}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn refuses_large_instances() {
        let cols: Vec<String> = (0..7).map(|_| "01".to_string()).collect();
        let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let d = ds(&refs, &[0, 1], &[1.0, 1.0]);
        assert!(matches!(brute_force(&d, 2, 0.0), Err(OracleError::TooLargeToEnumerate { .. })));
        let d = ds(&["01"], &[0, 1], &[1.0, 1.0]);
        assert!(matches!(brute_force(&d, 4, 0.0), Err(OracleError::TooLargeToEnumerate { .. })));
    }
}
