//! Timing of the loss-mass sweep: every column split into its two children,
//! every class's loss mass on each child.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BinarizedDataset, Bits};
use crate::objective::{KernelMode, LossKernel, ObjectiveError};

/// Random unit-weight binary data with `n` rows, `m` columns and two classes.
pub fn synthetic_dataset(n: usize, m: usize, seed: u64) -> BinarizedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = (0..m).map(|_| Bits::from_bools((0..n).map(|_| rng.random_bool(0.5)))).collect();
    let labels = (0..n).map(|_| u32::from(rng.random_bool(0.5))).collect();
    BinarizedDataset::from_columns(cols, labels, vec![1.0; n]).expect("synthetic data is valid")
}

/// Children of every column split of the full sample set.
pub fn sweep_sets(ds: &BinarizedDataset) -> Vec<Bits> {
    ds.columns().iter().flat_map(|c| [c.clone(), c.not()]).collect()
}

/// One sweep; returns the sum of all loss masses so the work is observable.
pub fn kernel_sweep(kernel: &LossKernel, sets: &[Bits]) -> f64 {
    let mut acc = 0.0;
    for s in sets {
        for c in 0..kernel.n_classes() as u32 {
            acc += kernel.loss_mass(s, c);
        }
    }
    acc
}

/// Median wall time in seconds over `repeats` sweeps, and the checksum.
pub fn time_sweep(ds: &BinarizedDataset, mode: KernelMode, repeats: usize) -> Result<(f64, f64), ObjectiveError> {
    let kernel = LossKernel::new(ds, mode)?;
    let sets = sweep_sets(ds);
    let mut times = Vec::with_capacity(repeats.max(1));
    let mut checksum = 0.0;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        checksum = std::hint::black_box(kernel_sweep(&kernel, std::hint::black_box(&sets)));
        times.push(start.elapsed().as_secs_f64());
    }
    Ok((median(&mut times), checksum))
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// `bitcount`, `weighted-dot`, or for the duplication grid
    /// `bitcount-duplicated` / `weighted-dot-direct`.
    pub kernel: String,
    pub n: usize,
    /// Duplication ratio: extra rows as a fraction of `n`.
    pub q: f64,
    /// Rows the kernel actually scans.
    pub rows: usize,
    pub columns: usize,
    pub repeats: usize,
    pub median_seconds: f64,
}

pub const CSV_HEADER: &str = "kernel,n,q,rows,columns,repeats,median_seconds";

impl BenchRow {
    pub fn csv(&self) -> String {
        format!("{},{},{},{},{},{},{:.9}", self.kernel, self.n, self.q, self.rows, self.columns, self.repeats, self.median_seconds)
    }
}

/// Both kernels on the same unit-weight data.
pub fn kernel_rows(ds: &BinarizedDataset, modes: &[KernelMode], repeats: usize) -> Result<Vec<BenchRow>, ObjectiveError> {
    modes
        .iter()
        .map(|&mode| {
            let (t, _) = time_sweep(ds, mode, repeats)?;
            Ok(BenchRow {
                kernel: mode.name().to_string(),
                n: ds.n_samples(),
                q: 0.0,
                rows: ds.n_samples(),
                columns: ds.n_columns(),
                repeats,
                median_seconds: t,
            })
        })
        .collect()
}

/// Integer weights with mean `1 + q`: 1 when `q == 0`, otherwise uniform on
/// `1..=1 + 2q` (rounded).
pub fn integer_weights(n: usize, q: f64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = (1.0 + 2.0 * q).round() as u64;
    (0..n).map(|_| if hi <= 1 { 1 } else { rng.random_range(1..=hi) }).collect()
}

/// For each duplication ratio, the weighted-dot sweep on the `n`-row
/// weighted data against the bitcount sweep on its duplicated form.
pub fn duplication_grid(n: usize, m: usize, qs: &[f64], repeats: usize, seed: u64) -> Result<Vec<BenchRow>, ObjectiveError> {
    let base = synthetic_dataset(n, m, seed);
    let mut rows = Vec::new();
    for &q in qs {
        let counts = integer_weights(n, q, seed ^ q.to_bits());
        let weighted = base
            .with_weights(counts.iter().map(|&c| c as f64).collect())
            .expect("positive integer weights are valid");
        let source: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize)).collect();
        let duplicated = base.select_rows(&source, vec![1.0; source.len()]).expect("row selection is valid");
        let (direct, _) = time_sweep(&weighted, KernelMode::WeightedDot, repeats)?;
        let (dup, _) = time_sweep(&duplicated, KernelMode::Bitcount, repeats)?;
        rows.push(BenchRow {
            kernel: "weighted-dot-direct".into(),
            n,
            q,
            rows: n,
            columns: m,
            repeats,
            median_seconds: direct,
        });
        rows.push(BenchRow {
            kernel: "bitcount-duplicated".into(),
            n,
            q,
            rows: source.len(),
            columns: m,
            repeats,
            median_seconds: dup,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernels_compute_the_same_sweep() {
        let ds = synthetic_dataset(1000, 5, 1);
        let a = time_sweep(&ds, KernelMode::Bitcount, 1).unwrap().1;
        let b = time_sweep(&ds, KernelMode::WeightedDot, 1).unwrap().1;
        assert_eq!(a, b);
        // with two classes the loss masses on a set add up to its size, and
        // the two children of a column partition the N rows
        assert_eq!(a, 5.0 * 1000.0);
    }

    #[test]
    fn zero_ratio_means_no_duplication() {
        let rows = duplication_grid(500, 3, &[0.0], 1, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.rows == 500));
    }

    #[test]
    fn integer_weights_have_the_requested_mean() {
        let w = integer_weights(20_000, 10.0, 3);
        let mean = w.iter().sum::<u64>() as f64 / w.len() as f64;
        assert!((mean - 11.0).abs() < 0.2);
        assert!(integer_weights(10, 0.0, 3).iter().all(|&c| c == 1));
    }

    #[test]
    fn row_schema_is_fixed() {
        let ds = synthetic_dataset(200, 2, 4);
        let one = kernel_rows(&ds, &[KernelMode::Bitcount], 1).unwrap();
        let five = kernel_rows(&ds, &[KernelMode::Bitcount], 5).unwrap();
        assert_eq!(one[0].csv().split(',').count(), CSV_HEADER.split(',').count());
        assert_eq!(five[0].csv().split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
