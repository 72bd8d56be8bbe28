//! Weighted loss, the regularized objective, the guessed lower bound, and the
//! two loss-mass kernels.
//!
//! Everything inside the optimizer is carried in *mass units*: a loss mass is
//! a sum of sample weights, and the per-leaf penalty is `lambda * total_weight`.
//! Only the public objective functions normalize by the total weight.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BinarizedDataset, Bits, CaptureSet};
use crate::model::{ModelError, Tree};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("total weight is zero")]
    ZeroTotalWeight,
    #[error("bitcount kernel requires all weights equal to 1")]
    KernelModeMismatch,
    #[error("capture set is empty")]
    EmptyCaptureSet,
    #[error("class {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: u32, n_classes: usize },
    #[error("lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Relative tolerance (against the total weight) under which two costs in
/// mass units are considered tied.
pub const TIE_TOLERANCE: f64 = 1e-11;

/// Compares two mass-unit costs, treating near-equal values as ties.
#[inline]
pub fn cmp_cost(a: f64, b: f64, total_weight: f64) -> Ordering {
    if (a - b).abs() <= TIE_TOLERANCE * total_weight {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

/// Cost of a leaf in mass units.
#[inline]
pub fn leaf_cost(loss_mass: f64, penalty: f64) -> f64 {
    loss_mass + penalty
}

/// Cost of a split from its children's costs.
#[inline]
pub fn split_cost(zero: f64, one: f64) -> f64 {
    zero + one
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    /// AND + popcount; only valid when every weight is 1.
    Bitcount,
    /// Sum of weights over the set bits of the mismatch vector.
    WeightedDot,
}

impl KernelMode {
    pub fn name(self) -> &'static str {
        match self {
            KernelMode::Bitcount => "bitcount",
            KernelMode::WeightedDot => "weighted-dot",
        }
    }

    /// Bitcount for unit-weight data, weighted-dot otherwise.
    pub fn auto(ds: &BinarizedDataset) -> KernelMode {
        if ds.is_unit_weight() {
            KernelMode::Bitcount
        } else {
            KernelMode::WeightedDot
        }
    }
}

#[derive(Clone, Debug)]
pub struct LossKernel {
    mode: KernelMode,
    label_masks: Vec<Bits>,
    weights: Vec<f64>,
}

impl LossKernel {
    pub fn new(ds: &BinarizedDataset, mode: KernelMode) -> Result<Self, ObjectiveError> {
        if mode == KernelMode::Bitcount && !ds.is_unit_weight() {
            return Err(ObjectiveError::KernelModeMismatch);
        }
        let label_masks = (0..ds.n_classes() as u32)
            .map(|c| Bits::from_bools(ds.labels().iter().map(|&y| y == c)))
            .collect();
        Ok(LossKernel { mode, label_masks, weights: ds.weights().to_vec() })
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn n_classes(&self) -> usize {
        self.label_masks.len()
    }

    pub fn label_mask(&self, class: u32) -> &Bits {
        &self.label_masks[class as usize]
    }

    /// Weight mass of `s` minus the samples labelled `class`.
    #[inline]
    pub fn loss_mass(&self, s: &Bits, class: u32) -> f64 {
        let mask = &self.label_masks[class as usize];
        match self.mode {
            KernelMode::Bitcount => s.count_and_not(mask) as f64,
            KernelMode::WeightedDot => {
                let mut sum = 0.0;
                for (wi, (a, m)) in s.words().iter().zip(mask.words()).enumerate() {
                    let mut w = a & !m;
                    while w != 0 {
                        sum += self.weights[wi * 64 + w.trailing_zeros() as usize];
                        w &= w - 1;
                    }
                }
                sum
            }
        }
    }

    /// Weight mass of `s & other`.
    #[inline]
    pub fn mass_and(&self, s: &Bits, other: &Bits) -> f64 {
        match self.mode {
            KernelMode::Bitcount => s.count_and(other) as f64,
            KernelMode::WeightedDot => {
                let mut sum = 0.0;
                for (wi, (a, b)) in s.words().iter().zip(other.words()).enumerate() {
                    let mut w = a & b;
                    while w != 0 {
                        sum += self.weights[wi * 64 + w.trailing_zeros() as usize];
                        w &= w - 1;
                    }
                }
                sum
            }
        }
    }

    /// Best single-class prediction for `s`; ties go to the smallest class.
    /// An empty set yields class 0 with zero loss.
    #[inline]
    pub fn leaf(&self, s: &Bits) -> (u32, f64) {
        let mut best = (0u32, self.loss_mass(s, 0));
        for c in 1..self.label_masks.len() as u32 {
            let loss = self.loss_mass(s, c);
            if loss < best.1 {
                best = (c, loss);
            }
        }
        best
    }
}

/// Reference-model predictions `ŷ^T` and the mask of samples it gets wrong.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePredictions {
    preds: Vec<u32>,
    mismatch: Bits,
}

impl ReferencePredictions {
    pub fn new(preds: Vec<u32>, ds: &BinarizedDataset) -> Result<Self, ObjectiveError> {
        if preds.len() != ds.n_samples() {
            return Err(ObjectiveError::LengthMismatch { expected: ds.n_samples(), found: preds.len() });
        }
        if let Some(&c) = preds.iter().find(|&&c| c as usize >= ds.n_classes()) {
            return Err(ObjectiveError::ClassOutOfRange { class: c, n_classes: ds.n_classes() });
        }
        let mismatch = Bits::from_bools(preds.iter().zip(ds.labels()).map(|(p, y)| p != y));
        Ok(ReferencePredictions { preds, mismatch })
    }

    pub fn preds(&self) -> &[u32] {
        &self.preds
    }

    /// Bit i set iff the reference misclassifies sample i (the set MC).
    pub fn mismatch_mask(&self) -> &Bits {
        &self.mismatch
    }
}

fn check_lambda(lambda: f64) -> Result<(), ObjectiveError> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(ObjectiveError::InvalidLambda(lambda))
    }
}

/// Misclassified weight mass of `tree` over the whole dataset.
pub fn loss_mass_of(tree: &Tree, ds: &BinarizedDataset) -> Result<f64, ObjectiveError> {
    let preds = tree.predict(ds)?;
    Ok(preds
        .iter()
        .zip(ds.labels())
        .zip(ds.weights())
        .filter(|((p, y), _)| p != y)
        .fold(0.0, |acc, (_, w)| acc + w))
}

/// Weighted misclassification rate of `tree`, in `[0, 1]`.
pub fn weighted_loss(tree: &Tree, ds: &BinarizedDataset) -> Result<f64, ObjectiveError> {
    if ds.total_weight() <= 0.0 {
        return Err(ObjectiveError::ZeroTotalWeight);
    }
    Ok(loss_mass_of(tree, ds)? / ds.total_weight())
}

/// Weighted loss plus `lambda` per leaf.
pub fn objective(tree: &Tree, ds: &BinarizedDataset, lambda: f64) -> Result<f64, ObjectiveError> {
    check_lambda(lambda)?;
    Ok(weighted_loss(tree, ds)? + lambda * tree.leaf_count() as f64)
}

/// Unnormalized loss mass of predicting `class` on `s`.
pub fn subset_loss_mass(
    s: &CaptureSet,
    class: u32,
    ds: &BinarizedDataset,
    kernel: &LossKernel,
) -> Result<f64, ObjectiveError> {
    if class as usize >= ds.n_classes() {
        return Err(ObjectiveError::ClassOutOfRange { class, n_classes: ds.n_classes() });
    }
    if kernel.mode() == KernelMode::Bitcount && !ds.is_unit_weight() {
        return Err(ObjectiveError::KernelModeMismatch);
    }
    if s.bits().len() != ds.n_samples() {
        return Err(ObjectiveError::LengthMismatch { expected: ds.n_samples(), found: s.bits().len() });
    }
    Ok(kernel.loss_mass(s.bits(), class))
}

/// Weighted-majority class of `s` and its loss mass.
pub fn best_leaf(s: &CaptureSet, ds: &BinarizedDataset, kernel: &LossKernel) -> Result<(u32, f64), ObjectiveError> {
    if s.is_empty() {
        return Err(ObjectiveError::EmptyCaptureSet);
    }
    if s.bits().len() != ds.n_samples() {
        return Err(ObjectiveError::LengthMismatch { expected: ds.n_samples(), found: s.bits().len() });
    }
    Ok(kernel.leaf(s.bits()))
}

/// Guessed lower bound: the reference model's misclassified mass on `s`,
/// normalized, plus one leaf's penalty.
pub fn lb_guess(
    s: &CaptureSet,
    reference: &ReferencePredictions,
    ds: &BinarizedDataset,
    lambda: f64,
) -> Result<f64, ObjectiveError> {
    check_lambda(lambda)?;
    if reference.preds.len() != ds.n_samples() || s.bits().len() != ds.n_samples() {
        return Err(ObjectiveError::LengthMismatch { expected: ds.n_samples(), found: reference.preds.len() });
    }
    let mass: f64 = s.bits().and(&reference.mismatch).iter_ones().map(|i| ds.weights()[i]).sum();
    Ok(mass / ds.total_weight() + lambda)
}
