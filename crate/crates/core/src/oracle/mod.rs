//! Ground truth for tests: exhaustive optimizers, checkers for the three
//! approximation guarantees, and a random instance generator.

mod brute;
mod suite;
mod theorems;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BinarizedDataset, Bits, DataError};
use crate::objective::ObjectiveError;
use crate::reference::ReferenceError;
use crate::search::SearchError;
use crate::weights::WeightsError;

pub use brute::{brute_force, brute_force_recursive, shapes, Shape, MAX_COLUMNS, MAX_DEPTH};
pub use suite::{
    check_optimality, oracle_instance, references, run_verification, CheckSummary, VerifyConfig, VerifyReport,
    DUPLICATION_FACTORS, EPSILONS, LAMBDAS, SAMPLE_SIZES, VERIFY_SCHEMA_VERSION,
};
pub use theorems::{
    check_theorem1, check_theorem2, check_theorem3, theorem1_rhs, wilson_interval, EpsilonRow, RoundingStats,
    Theorem3Report, WILSON_Z99,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large to enumerate ({columns} columns, depth {depth})")]
    TooLargeToEnumerate { columns: usize, depth: usize },
    #[error("weights must be strictly positive (index {index})")]
    NonpositiveWeight { index: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("at least {min} repetitions required, got {found}")]
    TooFewRepetitions { min: usize, found: usize },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
}

/// Outcome of a bound check: `holds == (lhs <= rhs + 1e-12)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Inputs sufficient to reproduce the check.
    pub witness: serde_json::Value,
}

impl BoundReport {
    pub fn new(lhs: f64, rhs: f64, witness: serde_json::Value) -> Self {
        BoundReport { lhs, rhs, holds: lhs <= rhs + 1e-12, witness }
    }
}

/// Serializable form of a small dataset, used in witnesses.
pub fn dataset_witness(ds: &BinarizedDataset) -> serde_json::Value {
    let cols: Vec<String> = ds
        .columns()
        .iter()
        .map(|c| (0..c.len()).map(|i| if c.get(i) { '1' } else { '0' }).collect())
        .collect();
    serde_json::json!({
        "columns": cols,
        "labels": ds.labels(),
        "weights": ds.weights(),
    })
}

/// Shape of a random test instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub n_samples: usize,
    pub n_columns: usize,
    pub n_classes: u32,
    /// Draw weights uniformly from `[0.1, 10)`; otherwise all ones.
    pub weighted: bool,
}

/// Random binary columns, labels and weights. Every class id below
/// `n_classes` appears at least once so class counts are stable.
pub fn random_instance<R: Rng>(rng: &mut R, spec: &InstanceSpec) -> BinarizedDataset {
    let n = spec.n_samples;
    let cols = (0..spec.n_columns).map(|_| Bits::from_bools((0..n).map(|_| rng.random_bool(0.5)))).collect();
    let mut labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..spec.n_classes)).collect();
    for c in 0..spec.n_classes.min(n as u32) {
        if !labels.contains(&c) {
            labels[c as usize] = c;
        }
    }
    let weights = if spec.weighted {
        (0..n).map(|_| rng.random_range(0.1..10.0)).collect()
    } else {
        vec![1.0; n]
    };
    BinarizedDataset::from_columns(cols, labels, weights).expect("generated instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_instances_are_reproducible() {
        let spec = InstanceSpec { n_samples: 20, n_columns: 4, n_classes: 3, weighted: true };
        let a = random_instance(&mut ChaCha8Rng::seed_from_u64(9), &spec);
        let b = random_instance(&mut ChaCha8Rng::seed_from_u64(9), &spec);
        assert_eq!(a, b);
        assert_eq!(a.n_classes(), 3);
        assert_eq!(a.n_columns(), 4);
    }

    #[test]
    fn bound_report_tolerance() {
        assert!(BoundReport::new(1.0, 1.0 - 1e-13, serde_json::Value::Null).holds);
        assert!(!BoundReport::new(1.0, 1.0 - 1e-11, serde_json::Value::Null).holds);
    }

    #[test]
    fn small_verification_run_passes() {
        let report = run_verification(&VerifyConfig { instances: 24, repetitions: 1000, seed: 5 }).unwrap();
        for c in &report.checks {
            assert_eq!(c.runs, 24);
            assert_eq!(c.failures, 0, "{}: {:?}", c.name, c.failed);
        }
        assert_eq!(report.sampling.len(), 9);
        assert!(report.passed);
    }
}
