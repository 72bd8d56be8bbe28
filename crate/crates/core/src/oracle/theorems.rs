use serde::{Deserialize, Serialize};

use crate::data::BinarizedDataset;
use crate::model::Tree;
use crate::objective::{weighted_loss, ReferencePredictions};
use crate::search::{optimize, SearchConfig};
use crate::weights::{sample_indices, SampleConfig};

use super::{brute_force, dataset_witness, BoundReport, OracleError};

/// Two-sided 99% normal quantile.
pub const WILSON_Z99: f64 = 2.5758293035489;

/// Right-hand side of the guessing guarantee for a comparison tree `t`:
/// the reference model's misclassified mass, plus the mass `t` gets wrong
/// among the samples the reference gets right, normalized, plus `lambda`
/// per leaf of `t`.
pub fn theorem1_rhs(
    ds: &BinarizedDataset,
    reference: &ReferencePredictions,
    t: &Tree,
    lambda: f64,
) -> Result<f64, OracleError> {
    let preds = t.predict(ds).map_err(crate::objective::ObjectiveError::from)?;
    let mut mass = 0.0;
    for i in 0..ds.n_samples() {
        let y = ds.labels()[i];
        if reference.preds()[i] != y || preds[i] != y {
            mass += ds.weights()[i];
        }
    }
    Ok(mass / ds.total_weight() + lambda * t.leaf_count() as f64)
}

/// Guessed-mode search against the exhaustive optimum `t*`.
pub fn check_theorem1(
    ds: &BinarizedDataset,
    d: usize,
    lambda: f64,
    reference: &ReferencePredictions,
) -> Result<BoundReport, OracleError> {
    let guessed = optimize(ds, &SearchConfig::guessed(lambda, d, reference.clone()))?;
    let (_, t_star) = brute_force(ds, d, lambda)?;
    let rhs = theorem1_rhs(ds, reference, &t_star, lambda)?;
    let witness = serde_json::json!({
        "dataset": dataset_witness(ds),
        "depth": d,
        "lambda": lambda,
        "reference": reference.preds(),
        "guessed_tree": guessed.tree,
        "optimal_tree": t_star,
    });
    Ok(BoundReport::new(guessed.objective_value, rhs, witness))
}

/// Statistics of a weight perturbation `w -> w~`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundingStats {
    /// `max_i w_i / w~_i`
    pub eta: f64,
    /// `max_i w~_i / w_i`
    pub zeta: f64,
    /// `max_i {w_i, w~_i} / min_i {w_i, w~_i}`
    pub psi: f64,
    /// `max_i |w_i - w~_i|`
    pub epsilon: f64,
}

impl RoundingStats {
    pub fn new(w: &[f64], w_tilde: &[f64]) -> Result<Self, OracleError> {
        if w.len() != w_tilde.len() {
            return Err(OracleError::LengthMismatch { expected: w.len(), found: w_tilde.len() });
        }
        for (index, (a, b)) in w.iter().zip(w_tilde).enumerate() {
            if !(*a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(OracleError::NonpositiveWeight { index });
            }
        }
        let mut s = RoundingStats { eta: 0.0, zeta: 0.0, psi: 0.0, epsilon: 0.0 };
        let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
        for (a, b) in w.iter().zip(w_tilde) {
            s.eta = s.eta.max(a / b);
            s.zeta = s.zeta.max(b / a);
            s.epsilon = s.epsilon.max((a - b).abs());
            hi = hi.max(a.max(*b));
            lo = lo.min(a.min(*b));
        }
        s.psi = hi / lo;
        Ok(s)
    }

    /// `max{((zeta-1) psi + eps) / zeta, ((eta-1) psi + eps) / eta}`
    pub fn bound(&self) -> f64 {
        let a = ((self.zeta - 1.0) * self.psi + self.epsilon) / self.zeta;
        let b = ((self.eta - 1.0) * self.psi + self.epsilon) / self.eta;
        a.max(b)
    }
}

/// Gap between the optimal objectives under `ds`'s weights and under
/// `w_tilde`, against the rounding bound. Both vectors should be on the same
/// scale (e.g. `c * w` and the rounded counts).
pub fn check_theorem2(
    ds: &BinarizedDataset,
    w_tilde: &[f64],
    d: usize,
    lambda: f64,
) -> Result<BoundReport, OracleError> {
    let stats = RoundingStats::new(ds.weights(), w_tilde)?;
    let approx = ds.with_weights(w_tilde.to_vec())?;
    let (r_star, t_star) = brute_force(ds, d, lambda)?;
    let (r_tilde, t_tilde) = brute_force(&approx, d, lambda)?;
    let witness = serde_json::json!({
        "dataset": dataset_witness(ds),
        "w_tilde": w_tilde,
        "depth": d,
        "lambda": lambda,
        "stats": stats,
        "optimal_tree": t_star,
        "approx_tree": t_tilde,
    });
    Ok(BoundReport::new((r_star - r_tilde).abs(), stats.bound(), witness))
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = p + z2 / (2.0 * n_f);
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    // at k = 0 or k = n the bound is exactly 0 or 1; the formula leaves
    // rounding residue there
    let lower = if k == 0 { 0.0 } else { ((centre - half) / denom).max(0.0) };
    let upper = if k == n { 1.0 } else { ((centre + half) / denom).min(1.0) };
    (lower, upper)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub exceedances: usize,
    pub empirical: f64,
    pub wilson_lower: f64,
    pub wilson_upper: f64,
    /// `2 exp(-2 S eps^2)`, the bound for a mean of S i.i.d. draws.
    pub hoeffding: f64,
    /// `2 exp(-2 eps^2 / S)`, as printed in the main statement (reported only).
    pub printed_body: f64,
    /// `2 exp(-2 eps^2 / S^2)`, as printed in the appendix (reported only).
    pub printed_appendix: f64,
    /// The lower Wilson bound does not exceed `hoeffding`.
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Report {
    pub weighted_loss: f64,
    pub sample_size: usize,
    pub repetitions: usize,
    pub mean: f64,
    pub std_err: f64,
    /// Mean sampled loss within three standard errors of the weighted loss.
    pub unbiased: bool,
    pub rows: Vec<EpsilonRow>,
    pub holds: bool,
}

/// Monte Carlo check of the sampling concentration bound: for each seed
/// `seed + rep`, draws `S = round(r N)` rows and measures the unweighted mean
/// mismatch of `tree` on them.
pub fn check_theorem3(
    ds: &BinarizedDataset,
    tree: &Tree,
    r: f64,
    eps_grid: &[f64],
    repetitions: usize,
    seed: u64,
) -> Result<Theorem3Report, OracleError> {
    if repetitions < 1000 {
        return Err(OracleError::TooFewRepetitions { min: 1000, found: repetitions });
    }
    let l_w = weighted_loss(tree, ds)?;
    let preds = tree.predict(ds).map_err(crate::objective::ObjectiveError::from)?;
    let wrong: Vec<bool> = preds.iter().zip(ds.labels()).map(|(p, y)| p != y).collect();
    let s = SampleConfig { r, seed }.size(ds.n_samples())?;
    let mut losses = Vec::with_capacity(repetitions);
    for rep in 0..repetitions as u64 {
        let rows = sample_indices(ds.weights(), &SampleConfig { r, seed: seed.wrapping_add(rep) })?;
        let errs = rows.iter().filter(|&&i| wrong[i]).count();
        losses.push(errs as f64 / rows.len() as f64);
    }
    let reps = repetitions as f64;
    let mean = losses.iter().sum::<f64>() / reps;
    let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (reps - 1.0);
    let std_err = (var / reps).sqrt();
    let unbiased = (mean - l_w).abs() <= 3.0 * std_err + 1e-12;
    let s_f = s as f64;
    let rows: Vec<EpsilonRow> = eps_grid
        .iter()
        .map(|&eps| {
            let exceedances = losses.iter().filter(|l| (*l - l_w).abs() >= eps).count();
            let (wilson_lower, wilson_upper) = wilson_interval(exceedances, repetitions, WILSON_Z99);
            let hoeffding = 2.0 * (-2.0 * s_f * eps * eps).exp();
            EpsilonRow {
                epsilon: eps,
                exceedances,
                empirical: exceedances as f64 / reps,
                wilson_lower,
                wilson_upper,
                hoeffding,
                printed_body: 2.0 * (-2.0 * eps * eps / s_f).exp(),
                printed_appendix: 2.0 * (-2.0 * eps * eps / (s_f * s_f)).exp(),
                holds: wilson_lower <= hoeffding,
            }
        })
        .collect();
    let holds = unbiased && rows.iter().all(|r| r.holds);
    Ok(Theorem3Report { weighted_loss: l_w, sample_size: s, repetitions, mean, std_err, unbiased, rows, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Bits;
    use crate::model::Node;
    use crate::objective::objective;
    use crate::search::{optimize, SearchConfig};

    fn ds(cols: &[&str], labels: &[u32], weights: &[f64]) -> BinarizedDataset {
        BinarizedDataset::from_columns(cols.iter().map(|c| Bits::from_str01(c)).collect(), labels.to_vec(), weights.to_vec())
            .unwrap()
    }

    fn sample_ds() -> BinarizedDataset {
        ds(
            &["0011001101", "0101010110", "1110010010"],
            &[0, 1, 1, 0, 1, 1, 0, 0, 1, 0],
            &[1.0, 2.0, 0.5, 1.5, 3.0, 1.0, 1.0, 0.25, 2.0, 1.0],
        )
    }

    #[test]
    fn guessing_bound_with_optimal_reference() {
        let d = sample_ds();
        let (_, t_star) = brute_force(&d, 2, 0.02).unwrap();
        let reference = ReferencePredictions::new(t_star.predict(&d).unwrap(), &d).unwrap();
        let report = check_theorem1(&d, 2, 0.02, &reference).unwrap();
        assert!(report.holds, "{report:?}");
        // reference = t*: rhs collapses to objective(t*)
        assert!((report.rhs - objective(&t_star, &d, 0.02).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn guessing_bound_with_perfect_and_constant_references() {
        let d = sample_ds();
        for preds in [d.labels().to_vec(), vec![0; 10], vec![1; 10]] {
            let reference = ReferencePredictions::new(preds, &d).unwrap();
            for lambda in [0.0, 0.05] {
                let report = check_theorem1(&d, 2, lambda, &reference).unwrap();
                assert!(report.holds, "{report:?}");
            }
        }
    }

    #[test]
    fn identical_weights_give_zero_bound() {
        let d = sample_ds();
        let report = check_theorem2(&d, d.weights(), 2, 0.01).unwrap();
        assert_eq!(report.rhs, 0.0);
        assert_eq!(report.lhs, 0.0);
        assert!(report.holds);
    }

    #[test]
    fn doubled_weights_change_nothing() {
        let d = sample_ds();
        let doubled: Vec<f64> = d.weights().iter().map(|w| 2.0 * w).collect();
        let report = check_theorem2(&d, &doubled, 2, 0.01).unwrap();
        assert!(report.lhs <= 1e-15);
        assert!(report.holds);
    }

    #[test]
    fn rounding_stats_example() {
        let s = RoundingStats::new(&[2.0 / 3.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!((s.eta - 1.0).abs() < 1e-15);
        assert!((s.zeta - 1.5).abs() < 1e-15);
        assert!((s.psi - 3.0).abs() < 1e-15);
        assert!((s.epsilon - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(RoundingStats::new(&[1.0, 0.0], &[1.0, 1.0]), Err(OracleError::NonpositiveWeight { index: 1 })));
    }

    #[test]
    fn rounding_stats_are_permutation_invariant() {
        let w = [0.3, 1.7, 2.2, 0.9];
        let wt = [1.0, 2.0, 2.0, 1.0];
        let a = RoundingStats::new(&w, &wt).unwrap();
        let b = RoundingStats::new(&[w[2], w[0], w[3], w[1]], &[wt[2], wt[0], wt[3], wt[1]]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_dataset_never_deviates() {
        let d = ds(&["1111"], &[1, 1, 1, 1], &[1.0, 2.0, 3.0, 4.0]);
        let t = Tree::new(Node::leaf(0));
        let rep = check_theorem3(&d, &t, 5.0, &[0.05, 0.5], 1000, 7).unwrap();
        assert_eq!(rep.weighted_loss, 1.0);
        assert!(rep.rows.iter().all(|r| r.exceedances == 0));
        assert!(rep.holds);
    }

    #[test]
    fn epsilon_above_one_is_never_exceeded() {
        let d = sample_ds();
        let t = Tree::new(Node::leaf(0));
        let rep = check_theorem3(&d, &t, 2.0, &[1.01], 1000, 1).unwrap();
        assert_eq!(rep.rows[0].empirical, 0.0);
    }

    #[test]
    fn coin_flip_tail() {
        // half the unit-weight mass is misclassified; S = 100, eps = 0.2
        let n = 50;
        let labels: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let d = BinarizedDataset::from_columns(vec![Bits::from_bools((0..n).map(|i| i < 25))], labels, vec![1.0; n]).unwrap();
        let t = Tree::new(Node::leaf(0));
        let rep = check_theorem3(&d, &t, 2.0, &[0.2], 2000, 11).unwrap();
        assert_eq!(rep.sample_size, 100);
        assert!(rep.rows[0].holds);
        assert!(rep.unbiased);
        assert!(rep.rows[0].empirical <= 2.0 * (-8.0f64).exp() + 0.01);
    }

    #[test]
    fn too_few_repetitions() {
        let d = sample_ds();
        let t = optimize(&d, &SearchConfig::exact(0.0, 1)).unwrap().tree;
        assert!(matches!(check_theorem3(&d, &t, 1.0, &[0.1], 10, 0), Err(OracleError::TooFewRepetitions { .. })));
    }

    #[test]
    fn wilson_interval_is_exact_at_the_ends() {
        for n in [10, 1000, 5000, 123_457] {
            assert_eq!(wilson_interval(0, n, WILSON_Z99).0, 0.0);
            assert_eq!(wilson_interval(n, n, WILSON_Z99).1, 1.0);
        }
    }

    #[test]
    fn wilson_interval_brackets_the_estimate() {
        let (lo, hi) = wilson_interval(30, 100, WILSON_Z99);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, _) = wilson_interval(0, 100, WILSON_Z99);
        assert_eq!(lo, 0.0);
    }
}
