//! Memoized branch-and-bound over `(capture set, depth budget)` subproblems.
//!
//! Costs are in mass units: a subtree costs its misclassified weight plus
//! `lambda * total_weight` per leaf. Every subproblem is solved exactly (no
//! budget is passed down), so cached results are reusable from any parent.
//!
//! Among equal-cost subtrees the solver prefers fewer leaves, then the
//! smallest preorder encoding. Depth enters the order only at the root,
//! where the shallowest budget that attains the optimum is selected.

mod key;

use std::cmp::Ordering;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use dashmap::DashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BinarizedDataset, Bits};
use crate::model::{Node, Tree};
use crate::objective::{
    cmp_cost, leaf_cost, objective, split_cost, KernelMode, LossKernel, ObjectiveError, ReferencePredictions,
    TIE_TOLERANCE,
};

pub use key::{canonical_key, SubproblemKey};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("depth limit must be at least 1, got {0}")]
    InfeasibleDepth(usize),
    #[error("guessed mode requires reference predictions")]
    MissingReference,
    #[error("reference predictions cover {found} samples, dataset has {expected}")]
    ReferenceLength { expected: usize, found: usize },
    #[error("could not start worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    Exact,
    Guessed,
}

impl SearchMode {
    pub fn name(self) -> &'static str {
        match self {
            SearchMode::Exact => "exact",
            SearchMode::Guessed => "guessed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimality {
    ProvedOptimal,
    GuessCertified,
    TimedOutBestKnown,
}

impl Optimality {
    pub fn name(self) -> &'static str {
        match self {
            Optimality::ProvedOptimal => "proved-optimal",
            Optimality::GuessCertified => "guess-certified",
            Optimality::TimedOutBestKnown => "timed-out-best-known",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub lambda: f64,
    pub depth_limit: usize,
    pub mode: SearchMode,
    pub kernel: KernelMode,
    pub reference: Option<ReferencePredictions>,
    pub time_limit: Option<Duration>,
    /// Worker threads for the root split fan-out; 1 runs on the calling
    /// thread, 0 uses the global pool. Guessed mode always runs sequentially.
    pub threads: usize,
    /// Cache subproblem results. Turning this off changes only the work done.
    pub memoize: bool,
    /// Record open/close events for every subproblem.
    pub trace: bool,
}

impl SearchConfig {
    pub fn exact(lambda: f64, depth_limit: usize) -> Self {
        SearchConfig {
            lambda,
            depth_limit,
            mode: SearchMode::Exact,
            kernel: KernelMode::WeightedDot,
            reference: None,
            time_limit: None,
            threads: 1,
            memoize: true,
            trace: false,
        }
    }

    pub fn guessed(lambda: f64, depth_limit: usize, reference: ReferencePredictions) -> Self {
        SearchConfig { mode: SearchMode::Guessed, reference: Some(reference), ..Self::exact(lambda, depth_limit) }
    }

    pub fn with_kernel(mut self, kernel: KernelMode) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// A subproblem started; `lb` is its lower bound, `ub` the leaf cost.
    Open { key: String, depth: usize, support: usize, lb: f64, ub: f64 },
    /// A subproblem resolved with objective contribution `cost`.
    Close { key: String, depth: usize, support: usize, cost: f64, leaves: usize, cached: bool },
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub tree: Tree,
    pub objective_value: f64,
    pub node_count_explored: u64,
    pub cache_hits: u64,
    pub elapsed: Duration,
    pub optimality: Optimality,
    pub trace: Option<Vec<TraceEvent>>,
}

#[derive(Clone, Debug)]
struct Solved {
    cost: f64,
    leaves: usize,
    tree: Node,
}

struct CacheEntry {
    bits: Bits,
    solved: Solved,
}

struct Solver<'a> {
    ds: &'a BinarizedDataset,
    kernel: LossKernel,
    mode: SearchMode,
    mismatch: Option<&'a Bits>,
    pen: f64,
    tol: f64,
    total: f64,
    deadline: Option<Instant>,
    memoize: bool,
    cache: DashMap<SubproblemKey, CacheEntry>,
    explored: AtomicU64,
    hits: AtomicU64,
    timed_out: AtomicBool,
    trace: Option<Mutex<Vec<TraceEvent>>>,
}

fn order(a: &Solved, b: &Solved, total: f64) -> Ordering {
    cmp_cost(a.cost, b.cost, total)
        .then(a.leaves.cmp(&b.leaves))
        .then_with(|| a.tree.preorder_cmp(&b.tree))
}

impl Solver<'_> {
    fn better(&self, a: &Solved, b: &Solved) -> bool {
        order(a, b, self.total) == Ordering::Less
    }

    fn out_of_time(&self) -> bool {
        if self.timed_out.load(AtomicOrdering::Relaxed) {
            return true;
        }
        if let Some(d) = self.deadline {
            if Instant::now() >= d {
                self.timed_out.store(true, AtomicOrdering::Relaxed);
                return true;
            }
        }
        false
    }

    fn leaf(&self, s: &Bits) -> Solved {
        let (class, loss) = self.kernel.leaf(s);
        Solved { cost: leaf_cost(loss, self.pen), leaves: 1, tree: Node::leaf(class) }
    }

    /// Guessed lower bound in mass units.
    fn lb_guess(&self, s: &Bits) -> f64 {
        self.kernel.mass_and(s, self.mismatch.expect("guessed mode has a reference")) + self.pen
    }

    /// Columns whose split leaves both children nonempty, in ascending order
    /// of the best stump's loss (ties by column index).
    fn column_order(&self, s: &Bits) -> Vec<usize> {
        let mut scored: Vec<(f64, usize)> = self
            .ds
            .columns()
            .iter()
            .enumerate()
            .filter_map(|(j, col)| {
                let one = s.and(col);
                let zero = s.and_not(col);
                if one.none() || zero.none() {
                    return None;
                }
                Some((self.kernel.leaf(&zero).1 + self.kernel.leaf(&one).1, j))
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.into_iter().map(|(_, j)| j).collect()
    }

    fn record(&self, ev: impl FnOnce() -> TraceEvent) {
        if let Some(t) = &self.trace {
            t.lock().unwrap().push(ev());
        }
    }

    fn lookup(&self, key: &SubproblemKey, s: &Bits) -> Option<Solved> {
        if !self.memoize {
            return None;
        }
        let entry = self.cache.get(key)?;
        (entry.bits == *s).then(|| entry.solved.clone())
    }

    fn store(&self, key: SubproblemKey, s: &Bits, solved: &Solved) {
        if self.memoize {
            self.cache.entry(key).or_insert_with(|| CacheEntry { bits: s.clone(), solved: solved.clone() });
        }
    }

    /// Optimal subtree for `(s, depth)`, or `None` if time ran out.
    fn solve(&self, s: &Bits, depth: usize) -> Option<Solved> {
        let key = key::key_of(s, depth);
        if let Some(hit) = self.lookup(&key, s) {
            self.hits.fetch_add(1, AtomicOrdering::Relaxed);
            self.record(|| TraceEvent::Close {
                key: key.hex(),
                depth,
                support: s.count_ones(),
                cost: hit.cost / self.total,
                leaves: hit.leaves,
                cached: true,
            });
            return Some(hit);
        }
        if self.out_of_time() {
            return None;
        }
        self.explored.fetch_add(1, AtomicOrdering::Relaxed);
        let leaf = self.leaf(s);
        let lb = match self.mode {
            SearchMode::Exact => self.pen,
            SearchMode::Guessed => self.lb_guess(s),
        };
        self.record(|| TraceEvent::Open {
            key: key.hex(),
            depth,
            support: s.count_ones(),
            lb: lb / self.total,
            ub: leaf.cost / self.total,
        });
        let solved = match self.mode {
            SearchMode::Exact => self.solve_exact(s, depth, leaf)?,
            SearchMode::Guessed => self.solve_guessed(s, depth, leaf, lb)?,
        };
        self.store(key, s, &solved);
        self.record(|| TraceEvent::Close {
            key: key.hex(),
            depth,
            support: s.count_ones(),
            cost: solved.cost / self.total,
            leaves: solved.leaves,
            cached: false,
        });
        Some(solved)
    }

    /// True when no split can beat `best`: every split costs at least two
    /// penalties.
    fn split_hopeless(&self, best: &Solved) -> bool {
        best.cost + self.tol < 2.0 * self.pen
    }

    fn solve_exact(&self, s: &Bits, depth: usize, leaf: Solved) -> Option<Solved> {
        if depth == 0 || leaf.cost - self.pen == 0.0 || leaf.cost <= 2.0 * self.pen + self.tol {
            return Some(leaf);
        }
        if depth == 1 {
            return Some(self.best_stump(s, leaf));
        }
        let mut best = leaf;
        for j in self.column_order(s) {
            if self.split_hopeless(&best) {
                break;
            }
            if let Some(cand) = self.try_split(s, depth, j, best.cost)? {
                if self.better(&cand, &best) {
                    best = cand;
                }
            }
        }
        Some(best)
    }

    fn best_stump(&self, s: &Bits, leaf: Solved) -> Solved {
        let mut best = leaf;
        for (j, col) in self.ds.columns().iter().enumerate() {
            let one = s.and(col);
            let zero = s.and_not(col);
            if one.none() || zero.none() {
                continue;
            }
            let (c0, l0) = self.kernel.leaf(&zero);
            let (c1, l1) = self.kernel.leaf(&one);
            let cand = Solved {
                cost: split_cost(leaf_cost(l0, self.pen), leaf_cost(l1, self.pen)),
                leaves: 2,
                tree: Node::split(j, Node::leaf(c0), Node::leaf(c1)),
            };
            if self.better(&cand, &best) {
                best = cand;
            }
        }
        best
    }

    /// Solves the split on column `j` unless it provably cannot beat an
    /// incumbent of cost `incumbent`. Outer `None` means timeout.
    fn try_split(&self, s: &Bits, depth: usize, j: usize, incumbent: f64) -> Option<Option<Solved>> {
        let col = self.ds.column(j);
        let zero = s.and_not(col);
        let left = self.solve(&zero, depth - 1)?;
        if left.cost + self.pen > incumbent + self.tol {
            return Some(None);
        }
        let right = self.solve(&s.and(col), depth - 1)?;
        Some(Some(Solved {
            cost: split_cost(left.cost, right.cost),
            leaves: left.leaves + right.leaves,
            tree: Node::split(j, left.tree, right.tree),
        }))
    }

    fn solve_guessed(&self, s: &Bits, depth: usize, leaf: Solved, lbg: f64) -> Option<Solved> {
        if depth == 0 || leaf.cost <= lbg + self.pen {
            return Some(leaf);
        }
        let mut best = leaf;
        for j in self.column_order(s) {
            let col = self.ds.column(j);
            let zero = s.and_not(col);
            let one = s.and(col);
            let left = self.solve(&zero, depth - 1)?;
            if left.cost + self.lb_guess(&one) >= best.cost {
                continue;
            }
            let right = self.solve(&one, depth - 1)?;
            let cand = Solved {
                cost: split_cost(left.cost, right.cost),
                leaves: left.leaves + right.leaves,
                tree: Node::split(j, left.tree, right.tree),
            };
            if self.better(&cand, &best) {
                best = cand;
            }
            if best.cost <= lbg {
                break;
            }
        }
        Some(best)
    }

    /// Root of an exact search with the split fan-out on the worker pool.
    /// Returns the best candidate found and whether the search completed.
    fn solve_root_parallel(&self, s: &Bits, depth: usize) -> (Solved, bool) {
        let leaf = self.leaf(s);
        if depth <= 1 || leaf.cost - self.pen == 0.0 || leaf.cost <= 2.0 * self.pen + self.tol {
            return match self.solve(s, depth) {
                Some(r) => (r, true),
                None => (leaf, false),
            };
        }
        self.explored.fetch_add(1, AtomicOrdering::Relaxed);
        let incumbent = AtomicU64::new(leaf.cost.to_bits());
        let order = self.column_order(s);
        let candidates: Vec<Option<Solved>> = order
            .par_iter()
            .map(|&j| {
                let inc = f64::from_bits(incumbent.load(AtomicOrdering::Acquire));
                if inc + self.tol < 2.0 * self.pen {
                    return None;
                }
                let cand = self.try_split(s, depth, j, inc)??;
                let mut cur = incumbent.load(AtomicOrdering::Acquire);
                while cand.cost < f64::from_bits(cur) {
                    match incumbent.compare_exchange(cur, cand.cost.to_bits(), AtomicOrdering::AcqRel, AtomicOrdering::Acquire) {
                        Ok(_) => break,
                        Err(actual) => cur = actual,
                    }
                }
                Some(cand)
            })
            .collect();
        let mut best = leaf;
        for cand in candidates.into_iter().flatten() {
            if self.better(&cand, &best) {
                best = cand;
            }
        }
        let complete = !self.timed_out.load(AtomicOrdering::Relaxed);
        if complete {
            self.store(key::key_of(s, depth), s, &best);
        }
        (best, complete)
    }

    /// Root of a sequential search, keeping the best completed candidate if
    /// time runs out part way.
    fn solve_root_sequential(&self, s: &Bits, depth: usize) -> (Solved, bool) {
        if let Some(r) = self.solve(s, depth) {
            return (r, true);
        }
        // Timed out: rebuild an incumbent from whatever completed.
        let mut best = self.leaf(s);
        if depth >= 1 {
            let stump = self.best_stump(s, best.clone());
            best = stump;
            for j in self.column_order(s) {
                let col = self.ds.column(j);
                let (Some(l), Some(r)) = (
                    self.lookup(&key::key_of(&s.and_not(col), depth - 1), &s.and_not(col)),
                    self.lookup(&key::key_of(&s.and(col), depth - 1), &s.and(col)),
                ) else {
                    continue;
                };
                let cand = Solved { cost: l.cost + r.cost, leaves: l.leaves + r.leaves, tree: Node::split(j, l.tree, r.tree) };
                if self.better(&cand, &best) {
                    best = cand;
                }
            }
        }
        (best, false)
    }
}

/// Finds a tree of depth at most `cfg.depth_limit` minimizing weighted loss
/// plus `cfg.lambda` per leaf.
pub fn optimize(ds: &BinarizedDataset, cfg: &SearchConfig) -> Result<SearchResult, SearchError> {
    let start = Instant::now();
    if cfg.depth_limit < 1 {
        return Err(SearchError::InfeasibleDepth(cfg.depth_limit));
    }
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        return Err(ObjectiveError::InvalidLambda(cfg.lambda).into());
    }
    let mismatch = match (cfg.mode, &cfg.reference) {
        (SearchMode::Guessed, None) => return Err(SearchError::MissingReference),
        (SearchMode::Guessed, Some(r)) => {
            if r.preds().len() != ds.n_samples() {
                return Err(SearchError::ReferenceLength { expected: ds.n_samples(), found: r.preds().len() });
            }
            Some(r.mismatch_mask())
        }
        (SearchMode::Exact, _) => None,
    };
    let kernel = LossKernel::new(ds, cfg.kernel)?;
    let total = ds.total_weight();
    let solver = Solver {
        ds,
        kernel,
        mode: cfg.mode,
        mismatch,
        pen: cfg.lambda * total,
        tol: TIE_TOLERANCE * total,
        total,
        deadline: cfg.time_limit.map(|t| start + t),
        memoize: cfg.memoize,
        cache: DashMap::new(),
        explored: AtomicU64::new(0),
        hits: AtomicU64::new(0),
        timed_out: AtomicBool::new(false),
        trace: cfg.trace.then(|| Mutex::new(Vec::new())),
    };
    let root = Bits::ones(ds.n_samples());
    let parallel = cfg.mode == SearchMode::Exact && cfg.threads != 1;

    let run = |depth: usize| -> (Solved, bool) {
        if parallel {
            solver.solve_root_parallel(&root, depth)
        } else {
            solver.solve_root_sequential(&root, depth)
        }
    };
    let search = || -> Solved {
        let (mut best, complete) = run(cfg.depth_limit);
        if !complete {
            return best;
        }
        if cfg.mode == SearchMode::Exact {
            // shallowest budget reaching the same cost and leaf count
            for d in 0..best.tree.depth() {
                let (shallow, ok) = run(d);
                if !ok {
                    break;
                }
                if cmp_cost(shallow.cost, best.cost, total).is_eq() && shallow.leaves == best.leaves {
                    best = shallow;
                    break;
                }
            }
        }
        best
    };

    let best = if parallel && cfg.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| SearchError::ThreadPool(e.to_string()))?;
        pool.install(search)
    } else {
        search()
    };

    let timed_out = solver.timed_out.load(AtomicOrdering::Relaxed);
    let tree = Tree::new(best.tree).collapse();
    let objective_value = objective(&tree, ds, cfg.lambda)?;
    let optimality = match (timed_out, cfg.mode) {
        (true, _) => Optimality::TimedOutBestKnown,
        (false, SearchMode::Exact) => Optimality::ProvedOptimal,
        (false, SearchMode::Guessed) => Optimality::GuessCertified,
    };
    Ok(SearchResult {
        tree,
        objective_value,
        node_count_explored: solver.explored.load(AtomicOrdering::Relaxed),
        cache_hits: solver.hits.load(AtomicOrdering::Relaxed),
        elapsed: start.elapsed(),
        optimality,
        trace: solver.trace.map(|t| t.into_inner().unwrap()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(cols: &[&str], labels: &[u32], weights: &[f64]) -> BinarizedDataset {
        BinarizedDataset::from_columns(cols.iter().map(|c| Bits::from_str01(c)).collect(), labels.to_vec(), weights.to_vec())
            .unwrap()
    }

    fn xor(weights: &[f64]) -> BinarizedDataset {
        ds(&["0011", "0101"], &[0, 1, 1, 0], weights)
    }

    #[test]
    fn separable_stump_reaches_zero() {
        let d = ds(&["0101", "0011"], &[0, 0, 1, 1], &[1.0; 4]);
        let r = optimize(&d, &SearchConfig::exact(0.0, 2)).unwrap();
        assert_eq!(r.objective_value, 0.0);
        assert_eq!(r.tree.root, Node::split(1, Node::leaf(0), Node::leaf(1)));
        assert_eq!(r.optimality, Optimality::ProvedOptimal);
    }

    #[test]
    fn xor_depth_two() {
        let r = optimize(&xor(&[1.0; 4]), &SearchConfig::exact(0.01, 2)).unwrap();
        assert!((r.objective_value - 0.04).abs() < 1e-15);
        assert_eq!(r.tree.leaf_count(), 4);
    }

    #[test]
    fn xor_depth_one() {
        let r = optimize(&xor(&[1.0; 4]), &SearchConfig::exact(0.0, 1)).unwrap();
        assert_eq!(r.objective_value, 0.5);
        // a single leaf ties every stump and has fewer leaves
        assert_eq!(r.tree.leaf_count(), 1);
    }

    #[test]
    fn weighted_xor_depth_one() {
        let r = optimize(&xor(&[10.0, 1.0, 1.0, 10.0]), &SearchConfig::exact(0.0, 1)).unwrap();
        assert!((r.objective_value - 2.0 / 22.0).abs() < 1e-15);
    }

    #[test]
    fn pure_subset_is_a_leaf() {
        let d = ds(&["0101"], &[1, 1, 1, 1], &[1.0; 4]);
        let r = optimize(&d, &SearchConfig::exact(0.0, 3)).unwrap();
        assert_eq!(r.tree.root, Node::leaf(1));
        assert_eq!(r.node_count_explored, 1);
    }

    #[test]
    fn guessed_perfect_reference_resolves_root_as_leaf() {
        let d = xor(&[1.0; 4]);
        let reference = ReferencePredictions::new(vec![0, 1, 1, 0], &d).unwrap();
        // leaf costs 2 + pen; lb_guess + pen = 2 pen, so pen >= 2 fires the rule
        let mut cfg = SearchConfig::guessed(0.5, 2, reference);
        cfg.trace = true;
        let r = optimize(&d, &cfg).unwrap();
        assert_eq!(r.tree.root.leaf_count(), 1);
        assert_eq!(r.optimality, Optimality::GuessCertified);
        let opens = r.trace.unwrap().iter().filter(|e| matches!(e, TraceEvent::Open { .. })).count();
        assert_eq!(opens, 1);
    }

    #[test]
    fn guessed_mode_needs_reference() {
        let mut cfg = SearchConfig::exact(0.0, 2);
        cfg.mode = SearchMode::Guessed;
        assert!(matches!(optimize(&xor(&[1.0; 4]), &cfg), Err(SearchError::MissingReference)));
    }

    #[test]
    fn depth_zero_is_infeasible() {
        assert!(matches!(optimize(&xor(&[1.0; 4]), &SearchConfig::exact(0.0, 0)), Err(SearchError::InfeasibleDepth(0))));
    }

    #[test]
    fn bitcount_needs_unit_weights() {
        let cfg = SearchConfig::exact(0.0, 2).with_kernel(KernelMode::Bitcount);
        assert!(optimize(&xor(&[1.0; 4]), &cfg).is_ok());
        assert!(matches!(
            optimize(&xor(&[2.0, 1.0, 1.0, 1.0]), &cfg),
            Err(SearchError::Objective(ObjectiveError::KernelModeMismatch))
        ));
    }

    #[test]
    fn xor_root_trace_closes_with_zero_mass() {
        let mut cfg = SearchConfig::exact(0.0, 2);
        cfg.trace = true;
        let r = optimize(&xor(&[1.0; 4]), &cfg).unwrap();
        assert_eq!(r.tree.depth(), 2);
        let trace = r.trace.unwrap();
        let root_close = trace
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Close { depth: 2, support: 4, cost, .. } => Some(*cost),
                _ => None,
            })
            .next()
            .unwrap();
        assert_eq!(root_close, 0.0);
        assert!(trace.iter().any(|e| matches!(e, TraceEvent::Open { .. })));
    }

    fn pseudo_random_instance(seed: u64, n: usize, m: usize) -> BinarizedDataset {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x
        };
        let cols = (0..m).map(|_| Bits::from_bools((0..n).map(|_| next() % 2 == 0))).collect();
        let labels = (0..n).map(|_| (next() % 3) as u32).collect();
        let weights = (0..n).map(|_| 0.1 + (next() % 1000) as f64 / 100.0).collect();
        BinarizedDataset::from_columns(cols, labels, weights).unwrap()
    }

    #[test]
    fn memoization_changes_work_not_answers() {
        for seed in 0..20 {
            let d = pseudo_random_instance(seed, 60, 6);
            let mut cfg = SearchConfig::exact(0.01, 3);
            let with = optimize(&d, &cfg).unwrap();
            cfg.memoize = false;
            let without = optimize(&d, &cfg).unwrap();
            assert_eq!(with.objective_value, without.objective_value);
            assert_eq!(with.tree, without.tree);
            assert!(without.node_count_explored >= with.node_count_explored);
            assert_eq!(without.cache_hits, 0);
        }
    }

    #[test]
    fn thread_count_does_not_change_the_tree() {
        for seed in 0..10 {
            let d = pseudo_random_instance(seed, 80, 8);
            let cfg = SearchConfig::exact(0.005, 3);
            let a = optimize(&d, &cfg).unwrap();
            let b = optimize(&d, &cfg.clone().with_threads(4)).unwrap();
            assert_eq!(a.tree, b.tree);
            assert_eq!(a.objective_value, b.objective_value);
        }
    }

    #[test]
    fn zero_time_limit_returns_best_known() {
        let d = pseudo_random_instance(3, 200, 10);
        let mut cfg = SearchConfig::exact(0.0, 4);
        cfg.time_limit = Some(Duration::ZERO);
        let r = optimize(&d, &cfg).unwrap();
        assert_eq!(r.optimality, Optimality::TimedOutBestKnown);
        assert!(r.tree.depth() <= 4);
        let recomputed = objective(&r.tree, &d, 0.0).unwrap();
        assert_eq!(recomputed, r.objective_value);
    }

    #[test]
    fn result_respects_depth_and_has_no_collapsible_splits() {
        for seed in 0..20 {
            let d = pseudo_random_instance(seed, 40, 5);
            for depth in 1..=3 {
                let r = optimize(&d, &SearchConfig::exact(0.0, depth)).unwrap();
                assert!(r.tree.depth() <= depth);
                assert!(!r.tree.root.has_collapsible_split());
            }
        }
    }
}
