//! Randomized runs of every checker, as used by the `verify` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::BinarizedDataset;
use crate::objective::ReferencePredictions;
use crate::reference::{fit_greedy, GreedyConfig};
use crate::search::{optimize, SearchConfig};
use crate::weights::{rounded_counts, DupConfig};

use super::{
    brute_force, check_theorem1, check_theorem2, check_theorem3, dataset_witness, random_instance, BoundReport,
    InstanceSpec, OracleError, Theorem3Report,
};

pub const VERIFY_SCHEMA_VERSION: u32 = 1;
pub const LAMBDAS: [f64; 4] = [0.0, 0.01, 0.05, 0.1];
pub const DUPLICATION_FACTORS: [u32; 4] = [2, 5, 10, 50];
pub const SAMPLE_SIZES: [usize; 3] = [50, 200, 1000];
pub const EPSILONS: [f64; 3] = [0.05, 0.1, 0.2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Random instances per bound check.
    pub instances: usize,
    /// Monte Carlo repetitions per sampling check.
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { instances: 500, repetitions: 5000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub runs: usize,
    pub failures: usize,
    /// Largest `lhs - rhs` seen; negative means every run had slack.
    pub worst_margin: f64,
    /// Reports of the first few failures.
    pub failed: Vec<BoundReport>,
}

impl CheckSummary {
    fn new(name: &str) -> Self {
        CheckSummary { name: name.into(), runs: 0, failures: 0, worst_margin: f64::NEG_INFINITY, failed: vec![] }
    }

    fn record(&mut self, report: BoundReport) {
        self.runs += 1;
        self.worst_margin = self.worst_margin.max(report.lhs - report.rhs);
        if !report.holds {
            self.failures += 1;
            if self.failed.len() < 3 {
                self.failed.push(report);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub config: VerifyConfig,
    pub checks: Vec<CheckSummary>,
    pub sampling: Vec<Theorem3Report>,
    pub passed: bool,
}

/// Random oracle-sized instance: up to 40 rows, 6 columns, 3 classes.
pub fn oracle_instance<R: Rng>(rng: &mut R, weighted: bool) -> BinarizedDataset {
    let spec = InstanceSpec {
        n_samples: rng.random_range(4..=40),
        n_columns: rng.random_range(1..=6),
        n_classes: rng.random_range(2..=3),
        weighted,
    };
    random_instance(rng, &spec)
}

/// Exact search against exhaustive enumeration. Unit-weight objectives must
/// match exactly, weighted ones to `1e-12` relative.
pub fn check_optimality(ds: &BinarizedDataset, d: usize, lambda: f64) -> Result<BoundReport, OracleError> {
    let found = optimize(ds, &SearchConfig::exact(lambda, d))?;
    let (best, tree) = brute_force(ds, d, lambda)?;
    let tol = if ds.is_unit_weight() { 0.0 } else { 1e-12 * best.abs().max(f64::MIN_POSITIVE) };
    let gap = (found.objective_value - best).abs();
    let witness = serde_json::json!({
        "dataset": dataset_witness(ds),
        "depth": d,
        "lambda": lambda,
        "search_tree": found.tree,
        "oracle_tree": tree,
    });
    // BoundReport adds its own 1e-12 slack; fold the tolerance into rhs and
    // decide `holds` here so unit weights stay exact.
    let mut report = BoundReport::new(gap, tol, witness);
    report.holds = gap <= tol;
    Ok(report)
}

/// The four reference models used for the guessing guarantee.
pub fn references<R: Rng>(rng: &mut R, ds: &BinarizedDataset) -> Result<Vec<(&'static str, ReferencePredictions)>, OracleError> {
    let k = ds.n_classes() as u32;
    let perfect = ds.labels().to_vec();
    let constant = vec![0; ds.n_samples()];
    let random = (0..ds.n_samples()).map(|_| rng.random_range(0..k)).collect();
    let greedy = fit_greedy(ds, &GreedyConfig { max_depth: 2, min_leaf_weight: 0.0, rounds: 1 })?
        .predictions
        .preds()
        .to_vec();
    [("perfect", perfect), ("constant", constant), ("greedy-depth-2", greedy), ("random", random)]
        .into_iter()
        .map(|(name, p)| Ok((name, ReferencePredictions::new(p, ds)?)))
        .collect()
}

/// Runs every checker on `cfg.instances` random instances each.
pub fn run_verification(cfg: &VerifyConfig) -> Result<VerifyReport, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimality = CheckSummary::new("optimality");
    let mut guessing = CheckSummary::new("guessing");
    let mut rounding = CheckSummary::new("rounding");

    for i in 0..cfg.instances {
        let ds = oracle_instance(&mut rng, i % 4 != 0);
        let d = rng.random_range(1..=3);
        let lambda = LAMBDAS[i % LAMBDAS.len()];
        optimality.record(check_optimality(&ds, d, lambda)?);
    }
    for i in 0..cfg.instances {
        let ds = oracle_instance(&mut rng, true);
        let d = rng.random_range(1..=3);
        let lambda = LAMBDAS[i % LAMBDAS.len()];
        let refs = references(&mut rng, &ds)?;
        let (name, reference) = &refs[i % refs.len()];
        let mut report = check_theorem1(&ds, d, lambda, reference)?;
        report.witness["reference_kind"] = serde_json::json!(name);
        guessing.record(report);
    }
    for i in 0..cfg.instances {
        let ds = oracle_instance(&mut rng, true);
        let d = rng.random_range(1..=3);
        let lambda = LAMBDAS[i % LAMBDAS.len()];
        let p = DUPLICATION_FACTORS[i % DUPLICATION_FACTORS.len()];
        let rounded = rounded_counts(ds.weights(), &DupConfig::new(p)?)?;
        let scaled = ds.with_weights(ds.weights().iter().map(|w| rounded.scale * w).collect())?;
        let mut report = check_theorem2(&scaled, &rounded.as_weights(), d, lambda)?;
        report.witness["p"] = serde_json::json!(p);
        rounding.record(report);
    }

    let mut sampling = Vec::new();
    for pair in 0..3 {
        let ds = random_instance(
            &mut rng,
            &InstanceSpec { n_samples: 200, n_columns: 5, n_classes: 2, weighted: true },
        );
        let tree = optimize(&ds, &SearchConfig::exact(0.01 * pair as f64, 2))?.tree;
        for s in SAMPLE_SIZES {
            let r = s as f64 / ds.n_samples() as f64;
            sampling.push(check_theorem3(&ds, &tree, r, &EPSILONS, cfg.repetitions, cfg.seed.wrapping_add(pair))?);
        }
    }

    let checks = vec![optimality, guessing, rounding];
    let passed = checks.iter().all(|c| c.failures == 0) && sampling.iter().all(|r| r.holds);
    Ok(VerifyReport { schema_version: VERIFY_SCHEMA_VERSION, config: cfg.clone(), checks, sampling, passed })
}
