//! Weight preprocessing: integer duplication, weighted resampling, and
//! cost-to-weight scaling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BinarizedDataset, DataError, RawDataset};

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("all weights are zero")]
    AllZeroWeights,
    #[error("duplicated dataset would have {size} rows, cap is {cap}")]
    OutputTooLarge { size: u64, cap: u64 },
    #[error("duplication factor must be in 1..=99, got {0}")]
    InvalidFactor(u32),
    #[error("sampling ratio must be positive and give at least one row (r = {r}, N = {n})")]
    InvalidRatio { r: f64, n: usize },
    #[error("total weight is zero")]
    ZeroTotalWeight,
    #[error("all costs are equal")]
    DegenerateRange,
    #[error("range must satisfy hi > lo > 0, got [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("costs must be finite and non-negative")]
    InvalidCosts,
    #[error("weights must be finite and non-negative")]
    InvalidWeights,
    #[error("label {0} has no cost (expected 0, 1 or 2)")]
    UnknownLabel(u32),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// How weights are brought to a common scale before multiplying by `p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divide by the largest weight, so weights land in (0, 1].
    Max,
    /// Divide by the total weight.
    Sum,
    /// Use the weights as they are (scale 1).
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DupConfig {
    pub p: u32,
    pub normalization: Normalization,
    /// Largest permitted output size; `None` means 100 times the input size.
    pub max_rows: Option<u64>,
}

impl DupConfig {
    pub fn new(p: u32) -> Result<Self, WeightsError> {
        let cfg = DupConfig { p, normalization: Normalization::Max, max_rows: None };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), WeightsError> {
        if (1..=99).contains(&self.p) {
            Ok(())
        } else {
            Err(WeightsError::InvalidFactor(self.p))
        }
    }
}

/// Integer copy counts for each row and the rounding error they introduce.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundedCounts {
    pub counts: Vec<u64>,
    /// Common scale `c`: counts approximate `c * w`.
    pub scale: f64,
    /// `max_i |c * w_i - counts_i|`.
    pub epsilon: f64,
}

impl RoundedCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn as_weights(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Row indices with each row repeated by its count, in row order.
    pub fn source_rows(&self) -> Vec<usize> {
        self.counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize)).collect()
    }
}

/// Scales weights by `c`, rounds half-to-even and clamps to at least one.
pub fn rounded_counts(weights: &[f64], cfg: &DupConfig) -> Result<RoundedCounts, WeightsError> {
    cfg.validate()?;
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(WeightsError::InvalidWeights);
    }
    let max = weights.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(WeightsError::AllZeroWeights);
    }
    let scale = match cfg.normalization {
        Normalization::Max => cfg.p as f64 / max,
        Normalization::Sum => cfg.p as f64 / weights.iter().sum::<f64>(),
        Normalization::None => 1.0,
    };
    let mut epsilon: f64 = 0.0;
    let counts = weights
        .iter()
        .map(|w| {
            let target = scale * w;
            let count = target.round_ties_even().max(1.0);
            epsilon = epsilon.max((target - count).abs());
            count as u64
        })
        .collect::<Vec<_>>();
    let out = RoundedCounts { counts, scale, epsilon };
    let cap = cfg.max_rows.unwrap_or(100 * weights.len() as u64);
    if out.total() > cap {
        return Err(WeightsError::OutputTooLarge { size: out.total(), cap });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Duplicated<D> {
    /// Unit-weight dataset with row `i` repeated `counts[i]` times.
    pub dataset: D,
    pub rounding: RoundedCounts,
    /// Source row of every output row.
    pub source_rows: Vec<usize>,
}

/// Replaces weights by integer copy counts and emits each row that many
/// times with unit weight.
pub fn duplicate(ds: &BinarizedDataset, cfg: &DupConfig) -> Result<Duplicated<BinarizedDataset>, WeightsError> {
    let rounding = rounded_counts(ds.weights(), cfg)?;
    let source_rows = rounding.source_rows();
    let dataset = ds.select_rows(&source_rows, vec![1.0; source_rows.len()])?;
    Ok(Duplicated { dataset, rounding, source_rows })
}

pub fn duplicate_raw(raw: &RawDataset, cfg: &DupConfig) -> Result<Duplicated<RawDataset>, WeightsError> {
    let rounding = rounded_counts(raw.weights(), cfg)?;
    let source_rows = rounding.source_rows();
    let dataset = raw.select_rows_unweighted(&source_rows);
    Ok(Duplicated { dataset, rounding, source_rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub r: f64,
    pub seed: u64,
}

impl SampleConfig {
    /// Number of draws for `n` rows: `round(r * n)`, half-to-even.
    pub fn size(&self, n: usize) -> Result<usize, WeightsError> {
        let s = (self.r * n as f64).round_ties_even();
        if !(self.r.is_finite() && self.r > 0.0) || s < 1.0 {
            return Err(WeightsError::InvalidRatio { r: self.r, n });
        }
        Ok(s as usize)
    }
}

/// `S` i.i.d. row indices drawn with probability proportional to weight.
pub fn sample_indices(weights: &[f64], cfg: &SampleConfig) -> Result<Vec<usize>, WeightsError> {
    let s = cfg.size(weights.len())?;
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(WeightsError::InvalidWeights);
    }
    let dist = WeightedIndex::new(weights).map_err(|_| WeightsError::ZeroTotalWeight)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..s).map(|_| dist.sample(&mut rng)).collect())
}

#[derive(Clone, Debug)]
pub struct Sampled<D> {
    pub dataset: D,
    pub source_rows: Vec<usize>,
}

pub fn weighted_sample(ds: &BinarizedDataset, cfg: &SampleConfig) -> Result<Sampled<BinarizedDataset>, WeightsError> {
    let rows = sample_indices(ds.weights(), cfg)?;
    let dataset = ds.select_rows(&rows, vec![1.0; rows.len()])?;
    Ok(Sampled { dataset, source_rows: rows })
}

pub fn weighted_sample_raw(raw: &RawDataset, cfg: &SampleConfig) -> Result<Sampled<RawDataset>, WeightsError> {
    let rows = sample_indices(raw.weights(), cfg)?;
    Ok(Sampled { dataset: raw.select_rows_unweighted(&rows), source_rows: rows })
}

/// Affine map of `costs` onto `[lo, hi]`, min to `lo` and max to `hi`.
pub fn scale_costs(costs: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>, WeightsError> {
    scale_costs_with(costs, lo, hi, false)
}

/// As [`scale_costs`]; with `constant_to_hi`, all-equal costs map to `hi`
/// instead of failing.
pub fn scale_costs_with(costs: &[f64], lo: f64, hi: f64, constant_to_hi: bool) -> Result<Vec<f64>, WeightsError> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(WeightsError::InvalidRange { lo, hi });
    }
    if costs.is_empty() || costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(WeightsError::InvalidCosts);
    }
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return if constant_to_hi { Ok(vec![hi; costs.len()]) } else { Err(WeightsError::DegenerateRange) };
    }
    Ok(costs.iter().map(|c| lo + (c - min) / (max - min) * (hi - lo)).collect())
}

/// Misclassification cost of a participant in the job-training case study.
pub fn lalonde_cost(label: u32, age: f64, misclassified: bool) -> Result<f64, WeightsError> {
    let cost = match label {
        0 => 200.0 + 3.0 * age,
        1 => 100.0 + 3.0 * age,
        2 => 300.0,
        other => return Err(WeightsError::UnknownLabel(other)),
    };
    Ok(if misclassified { cost } else { 0.0 })
}

/// Per-sample weights for the case study: each sample's misclassification
/// cost, scaled onto `[1, 100]`.
pub fn lalonde_weights(labels: &[u32], ages: &[f64]) -> Result<Vec<f64>, WeightsError> {
    let costs =
        labels.iter().zip(ages).map(|(&y, &a)| lalonde_cost(y, a, true)).collect::<Result<Vec<_>, _>>()?;
    scale_costs(&costs, 1.0, 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Bits;
    use crate::model::{Node, Tree};
    use crate::objective::objective;
    use proptest::prelude::*;

    #[test]
    fn equal_weights_duplicate_evenly() {
        let r = rounded_counts(&[2.5; 5], &DupConfig::new(7).unwrap()).unwrap();
        assert_eq!(r.counts, vec![7; 5]);
        assert_eq!(r.epsilon, 0.0);
    }

    #[test]
    fn hand_traced_duplication() {
        let r = rounded_counts(&[0.5, 1.0], &DupConfig::new(4).unwrap()).unwrap();
        assert_eq!(r.counts, vec![2, 4]);
        assert_eq!(r.epsilon, 0.0);
        let r = rounded_counts(&[1.0, 3.0], &DupConfig::new(2).unwrap()).unwrap();
        assert_eq!(r.counts, vec![1, 2]);
        assert!((r.epsilon - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rounding_is_half_to_even_and_clamped() {
        let cfg = DupConfig { p: 1, normalization: Normalization::None, max_rows: None };
        let r = rounded_counts(&[0.5, 1.5, 2.5, 0.0, 0.2], &cfg).unwrap();
        assert_eq!(r.counts, vec![1, 2, 2, 1, 1]);
        assert_eq!(r.epsilon, 1.0);
    }

    #[test]
    fn sum_normalization_variant() {
        let cfg = DupConfig { p: 10, normalization: Normalization::Sum, max_rows: None };
        let r = rounded_counts(&[1.0, 1.0, 3.0], &cfg).unwrap();
        assert_eq!(r.counts, vec![2, 2, 6]);
    }

    #[test]
    fn duplication_errors() {
        assert!(matches!(DupConfig::new(0), Err(WeightsError::InvalidFactor(0))));
        assert!(matches!(DupConfig::new(100), Err(WeightsError::InvalidFactor(100))));
        assert!(matches!(rounded_counts(&[0.0, 0.0], &DupConfig::new(3).unwrap()), Err(WeightsError::AllZeroWeights)));
        let cfg = DupConfig { p: 50, normalization: Normalization::Max, max_rows: Some(10) };
        assert!(matches!(rounded_counts(&[1.0, 1.0], &cfg), Err(WeightsError::OutputTooLarge { size: 100, cap: 10 })));
    }

    #[test]
    fn duplicate_emits_rows_by_count() {
        let ds = BinarizedDataset::from_columns(vec![Bits::from_str01("01")], vec![0, 1], vec![1.0, 3.0]).unwrap();
        let d = duplicate(&ds, &DupConfig::new(2).unwrap()).unwrap();
        assert_eq!(d.source_rows, vec![0, 1, 1]);
        assert_eq!(d.dataset.labels(), &[0, 1, 1]);
        assert!(d.dataset.is_unit_weight());
    }

    #[test]
    fn sample_size_rounds() {
        assert_eq!(SampleConfig { r: 0.5, seed: 0 }.size(5).unwrap(), 2);
        assert_eq!(SampleConfig { r: 0.7, seed: 0 }.size(5).unwrap(), 4);
        assert!(SampleConfig { r: 0.01, seed: 0 }.size(10).is_err());
        assert!(SampleConfig { r: -1.0, seed: 0 }.size(10).is_err());
    }

    #[test]
    fn degenerate_sampling_distribution() {
        let rows = sample_indices(&[0.0, 0.0, 5.0, 0.0], &SampleConfig { r: 10.0, seed: 3 }).unwrap();
        assert_eq!(rows.len(), 40);
        assert!(rows.iter().all(|&r| r == 2));
        assert!(matches!(sample_indices(&[0.0, 0.0], &SampleConfig { r: 1.0, seed: 3 }), Err(WeightsError::ZeroTotalWeight)));
    }

    #[test]
    fn sampling_is_seeded() {
        let w = [1.0, 2.0, 3.0, 4.0];
        let a = sample_indices(&w, &SampleConfig { r: 5.0, seed: 42 }).unwrap();
        let b = sample_indices(&w, &SampleConfig { r: 5.0, seed: 42 }).unwrap();
        let c = sample_indices(&w, &SampleConfig { r: 5.0, seed: 43 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let n = 8;
        let mut counts = vec![0usize; n];
        for seed in 0..2000 {
            for r in sample_indices(&vec![1.0; n], &SampleConfig { r: 1.0, seed }).unwrap() {
                counts[r] += 1;
            }
        }
        let total = (2000 * n) as f64;
        for c in counts {
            assert!((c as f64 / total - 1.0 / n as f64).abs() < 0.01);
        }
    }

    #[test]
    fn sampling_frequency_matches_binomial() {
        // weights [3, 1], S = 20 draws per seed, 10k seeds: the fraction of
        // row 0 is a binomial mean with p = 0.75.
        let seeds = 10_000u64;
        let draws_per_seed = 20.0;
        let mut hits = 0usize;
        for seed in 0..seeds {
            hits += sample_indices(&[3.0, 1.0], &SampleConfig { r: 10.0, seed }).unwrap().iter().filter(|&&r| r == 0).count();
        }
        let total = seeds as f64 * draws_per_seed;
        let frac = hits as f64 / total;
        let sigma = (0.75f64 * 0.25 / total).sqrt();
        assert!((frac - 0.75).abs() <= 3.0 * sigma, "{frac}");
    }

    #[test]
    fn scale_costs_examples() {
        assert_eq!(scale_costs(&[0.0, 300.0], 1.0, 100.0).unwrap(), vec![1.0, 100.0]);
        assert_eq!(scale_costs(&[0.0, 150.0, 300.0], 1.0, 100.0).unwrap()[1], 50.5);
        assert!(matches!(scale_costs(&[4.0, 4.0], 1.0, 100.0), Err(WeightsError::DegenerateRange)));
        assert_eq!(scale_costs_with(&[4.0, 4.0], 1.0, 100.0, true).unwrap(), vec![100.0, 100.0]);
        assert!(matches!(scale_costs(&[1.0, 2.0], 0.0, 100.0), Err(WeightsError::InvalidRange { .. })));
        assert!(matches!(scale_costs(&[1.0, 2.0], 5.0, 5.0), Err(WeightsError::InvalidRange { .. })));
    }

    #[test]
    fn lalonde_cost_table() {
        for label in 0..3 {
            assert_eq!(lalonde_cost(label, 40.0, false).unwrap(), 0.0);
        }
        assert_eq!(lalonde_cost(0, 30.0, true).unwrap(), 290.0);
        assert_eq!(lalonde_cost(1, 30.0, true).unwrap(), 190.0);
        assert_eq!(lalonde_cost(2, 55.0, true).unwrap(), 300.0);
        assert!(lalonde_cost(3, 30.0, true).is_err());
    }

    fn weights_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01f64..50.0, 1..30)
    }

    proptest! {
        #[test]
        fn counts_within_half_of_target(w in weights_strategy(), p in 1u32..100) {
            let cfg = DupConfig { p, normalization: Normalization::Max, max_rows: Some(u64::MAX) };
            let r = rounded_counts(&w, &cfg).unwrap();
            for (wi, c) in w.iter().zip(&r.counts) {
                let target = r.scale * wi;
                prop_assert!(*c >= 1);
                prop_assert!((target - *c as f64).abs() <= r.epsilon + 1e-12);
                if target >= 0.5 {
                    prop_assert!((target - *c as f64).abs() <= 0.5 + 1e-12);
                }
            }
        }

        #[test]
        fn duplicated_objective_equals_integer_weights(
            w in proptest::collection::vec(0.01f64..50.0, 8),
            bits in proptest::collection::vec(any::<bool>(), 16),
            labels in proptest::collection::vec(0u32..2, 8),
            p in 1u32..30,
            lambda in 0.0f64..0.1,
        ) {
            let cols = vec![Bits::from_bools(bits[..8].iter().copied()), Bits::from_bools(bits[8..].iter().copied())];
            let ds = BinarizedDataset::from_columns(cols, labels, w).unwrap();
            let cfg = DupConfig { p, normalization: Normalization::Max, max_rows: Some(u64::MAX) };
            let dup = duplicate(&ds, &cfg).unwrap();
            let integer = ds.with_weights(dup.rounding.as_weights()).unwrap();
            for t in [
                Node::leaf(0),
                Node::split(0, Node::leaf(0), Node::leaf(1)),
                Node::split(1, Node::split(0, Node::leaf(1), Node::leaf(0)), Node::leaf(1)),
            ] {
                let t = Tree::new(t);
                let a = objective(&t, &dup.dataset, lambda).unwrap();
                let b = objective(&t, &integer, lambda).unwrap();
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
