//! CART regression trees and bagged forests with 3-D vector leaves.
//!
//! Each tree recursively splits on single features; impurity is the summed
//! per-coordinate squared deviation of the targets (n times the trace of
//! the target covariance). Leaves store the mean target vector and a
//! forest prediction averages the leaf means over all trees, so every
//! prediction is a convex combination of training targets.
//!
//! Randomness (bootstrap resampling, per-node feature subsampling) comes
//! from counter-based substreams keyed by `(seed, tree_index, lane,
//! node_counter)`; training across trees may run on any number of threads
//! and still produce bitwise-identical forests.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::rng::substream;
use crate::scalar::Real;

pub const DEFAULT_N_TREES: usize = 100;
pub const DEFAULT_MIN_SAMPLES_LEAF: usize = 5;

/// Split-quality improvements at or below this are treated as noise and do
/// not produce a split.
const MIN_IMPURITY_DECREASE: f64 = 1e-12;

/// Two candidate decreases within this fraction of the node impurity are a
/// tie, resolved by (lowest feature index, lowest threshold). Distinct
/// features can induce the identical partition, whose mathematically equal
/// decreases then differ only by summation-order rounding (~1e-16
/// relative); without the band the winner would be rounding noise.
const TIE_BAND: f64 = 1e-10;

const LANE_BOOTSTRAP: u64 = 0;
const LANE_NODE_FEATURES: u64 = 1;

/// A training pair: feature vector and 3-D target.
pub type Sample<T> = (Vec<T>, Point3<T>);

/// Forest hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Maximum number of split levels below the root; `None` is unlimited.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` resolves to ceil(D / 3).
    pub mtry: Option<usize>,
    /// Train each tree on a same-size resample drawn with replacement.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: DEFAULT_N_TREES,
            max_depth: None,
            min_samples_leaf: DEFAULT_MIN_SAMPLES_LEAF,
            mtry: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    /// The mtry actually used for feature dimension `d`.
    pub fn resolved_mtry(&self, d: usize) -> usize {
        self.mtry.unwrap_or_else(|| d.div_ceil(3))
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::invalid_input("forest: n_trees must be >= 1"));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::invalid_input("forest: min_samples_leaf must be >= 1"));
        }
        let mtry = self.resolved_mtry(d);
        if mtry < 1 || mtry > d {
            return Err(Error::invalid_input(format!(
                "forest: mtry {mtry} outside 1..={d}"
            )));
        }
        Ok(())
    }
}

/// A CART node. Routing is `x[feature_index] <= threshold` to the left.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode<T> {
    Split {
        feature_index: usize,
        threshold: T,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
    Leaf {
        mean: Point3<T>,
        n_samples: usize,
    },
}

impl<T: Real> TreeNode<T> {
    pub fn predict(&self, x: &[T]) -> Point3<T> {
        match self {
            TreeNode::Leaf { mean, .. } => *mean,
            TreeNode::Split {
                feature_index,
                threshold,
                left,
                right,
            } => {
                if x[*feature_index] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }
}

/// A trained bagged forest.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest<T> {
    pub params: ForestParams,
    pub trees: Vec<TreeNode<T>>,
    pub feature_dim: usize,
}

/// The winning split for a node, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice<T> {
    pub feature_index: usize,
    pub threshold: T,
    pub impurity_decrease: T,
}

fn check_dims<T: Real>(samples: &[Sample<T>]) -> Result<usize> {
    let Some((first, _)) = samples.first() else {
        return Err(Error::invalid_input("forest: empty sample set"));
    };
    let d = first.len();
    if d == 0 {
        return Err(Error::invalid_input("forest: zero-dimensional features"));
    }
    for (i, (x, y)) in samples.iter().enumerate() {
        if x.len() != d {
            return Err(Error::invalid_input(format!(
                "forest: sample {i} has {} features, expected {d}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || !y.is_finite() {
            return Err(Error::invalid_input(format!(
                "forest: sample {i} has non-finite values"
            )));
        }
    }
    Ok(d)
}

/// Search `candidate_features` (scanned in the given order) for the split
/// maximizing impurity decrease, subject to both children holding at least
/// `min_samples_leaf` samples. Thresholds are midpoints between consecutive
/// distinct sorted feature values; ties break to the lowest feature index,
/// then the lowest threshold. Returns `None` when no legal split improves
/// impurity by more than 1e-12.
pub fn best_split<T: Real>(
    samples: &[Sample<T>],
    candidate_features: &[usize],
    min_samples_leaf: usize,
) -> Option<SplitChoice<T>> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let mut scratch = Vec::new();
    best_split_indexed(samples, &idx, candidate_features, min_samples_leaf, &mut scratch)
}

/// `best_split` over a node's sample index list (bootstrap multisets repeat
/// indices). `scratch` is reused across calls to avoid churn.
fn best_split_indexed<T: Real>(
    samples: &[Sample<T>],
    idx: &[usize],
    candidate_features: &[usize],
    min_samples_leaf: usize,
    scratch: &mut Vec<(T, usize)>,
) -> Option<SplitChoice<T>> {
    let n = idx.len();
    if n < 2 || n < 2 * min_samples_leaf {
        return None;
    }

    // Center targets on the node mean; the prefix-sum identities below are
    // then numerically stable even for pure nodes.
    let inv_n = T::one() / T::from_usize(n).unwrap();
    let mean = idx
        .iter()
        .fold(Point3::zero(), |acc, &i| acc + samples[i].1)
        * inv_n;

    let mut sum_tot = Point3::zero();
    let mut sumsq_tot = T::zero();
    for &i in idx {
        let yd = samples[i].1 - mean;
        sum_tot = sum_tot + yd;
        sumsq_tot += yd.norm_squared();
    }
    let sse_tot = sumsq_tot - sum_tot.norm_squared() * inv_n;
    let min_decrease = T::from_f64_const(MIN_IMPURITY_DECREASE);
    if sse_tot <= min_decrease {
        return None;
    }
    let tie_band = sse_tot * T::from_f64_const(TIE_BAND);

    let mut best: Option<SplitChoice<T>> = None;
    for &f in candidate_features {
        scratch.clear();
        scratch.extend(idx.iter().map(|&i| (samples[i].0[f], i)));
        // Total order on (value, index) keeps the scan deterministic for
        // repeated values.
        scratch.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });

        let mut sum_l = Point3::zero();
        let mut sumsq_l = T::zero();
        for k in 1..n {
            let (v_prev, i_prev) = scratch[k - 1];
            let yd = samples[i_prev].1 - mean;
            sum_l = sum_l + yd;
            sumsq_l += yd.norm_squared();

            let v_next = scratch[k].0;
            if !(v_prev < v_next) {
                continue;
            }
            if k < min_samples_leaf || n - k < min_samples_leaf {
                continue;
            }
            let threshold = (v_prev + v_next) * T::from_f64_const(0.5);
            // Midpoints of adjacent floats can round onto v_next, which
            // would route it left and break the counted partition.
            if !(threshold < v_next) {
                continue;
            }

            let k_t = T::from_usize(k).unwrap();
            let nk_t = T::from_usize(n - k).unwrap();
            let sse_l = sumsq_l - sum_l.norm_squared() / k_t;
            let sum_r = sum_tot - sum_l;
            let sse_r = (sumsq_tot - sumsq_l) - sum_r.norm_squared() / nk_t;
            let decrease = sse_tot - sse_l - sse_r;

            if decrease > min_decrease
                && best
                    .as_ref()
                    .map_or(true, |b| decrease > b.impurity_decrease + tie_band)
            {
                best = Some(SplitChoice {
                    feature_index: f,
                    threshold,
                    impurity_decrease: decrease,
                });
            }
        }
    }
    best
}

struct TreeBuilder<'a, T> {
    samples: &'a [Sample<T>],
    feature_dim: usize,
    mtry: usize,
    min_samples_leaf: usize,
    max_depth: Option<usize>,
    seed: u64,
    stream: u64,
    node_counter: u64,
    scratch: Vec<(T, usize)>,
}

impl<T: Real> TreeBuilder<'_, T> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> TreeNode<T> {
        let node_id = self.node_counter;
        self.node_counter += 1;

        let n = idx.len();
        let depth_ok = self.max_depth.map_or(true, |d| depth < d);
        let split = if depth_ok && n >= 2 * self.min_samples_leaf {
            let candidates = self.draw_candidates(node_id);
            best_split_indexed(
                self.samples,
                &idx,
                &candidates,
                self.min_samples_leaf,
                &mut self.scratch,
            )
        } else {
            None
        };

        match split {
            None => self.leaf(&idx),
            Some(choice) => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
                    .into_iter()
                    .partition(|&i| self.samples[i].0[choice.feature_index] <= choice.threshold);
                // The candidate filter guarantees both sides are populated.
                let left = self.grow(left_idx, depth + 1);
                let right = self.grow(right_idx, depth + 1);
                TreeNode::Split {
                    feature_index: choice.feature_index,
                    threshold: choice.threshold,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            }
        }
    }

    fn leaf(&self, idx: &[usize]) -> TreeNode<T> {
        let n = idx.len();
        let inv_n = T::one() / T::from_usize(n.max(1)).unwrap();
        let mean = idx
            .iter()
            .fold(Point3::zero(), |acc, &i| acc + self.samples[i].1)
            * inv_n;
        TreeNode::Leaf { mean, n_samples: n }
    }

    fn draw_candidates(&self, node_id: u64) -> Vec<usize> {
        if self.mtry >= self.feature_dim {
            // Exhaustive search; no randomness consumed.
            return (0..self.feature_dim).collect();
        }
        let mut rng = substream(self.seed, &[self.stream, LANE_NODE_FEATURES, node_id]);
        let mut picked =
            rand::seq::index::sample(&mut rng, self.feature_dim, self.mtry).into_vec();
        picked.sort_unstable();
        picked
    }
}

/// Train one CART tree on the full sample set. `rng_stream` namespaces the
/// per-node feature-subsampling streams (the forest passes the tree index).
pub fn train_tree<T: Real>(
    samples: &[Sample<T>],
    params: &ForestParams,
    rng_stream: u64,
) -> Result<TreeNode<T>> {
    let d = check_dims(samples)?;
    params.check(d)?;
    let mut builder = TreeBuilder {
        samples,
        feature_dim: d,
        mtry: params.resolved_mtry(d),
        min_samples_leaf: params.min_samples_leaf,
        max_depth: params.max_depth,
        seed: params.seed,
        stream: rng_stream,
        node_counter: 0,
        scratch: Vec::new(),
    };
    Ok(builder.grow((0..samples.len()).collect(), 0))
}

fn train_tree_on_indices<T: Real>(
    samples: &[Sample<T>],
    idx: Vec<usize>,
    params: &ForestParams,
    d: usize,
    rng_stream: u64,
) -> TreeNode<T> {
    let mut builder = TreeBuilder {
        samples,
        feature_dim: d,
        mtry: params.resolved_mtry(d),
        min_samples_leaf: params.min_samples_leaf,
        max_depth: params.max_depth,
        seed: params.seed,
        stream: rng_stream,
        node_counter: 0,
        scratch: Vec::new(),
    };
    builder.grow(idx, 0)
}

/// Train a bagged forest. Each tree sees an independent same-size bootstrap
/// resample (or the full set with `bootstrap: false`) and trains from its
/// own RNG substream, so results are independent of thread scheduling.
pub fn train_forest<T: Real>(samples: &[Sample<T>], params: &ForestParams) -> Result<Forest<T>> {
    let d = check_dims(samples)?;
    params.check(d)?;
    let n = samples.len();

    let trees: Vec<TreeNode<T>> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let idx: Vec<usize> = if params.bootstrap {
                let mut rng = substream(params.seed, &[t as u64, LANE_BOOTSTRAP]);
                (0..n).map(|_| rand::Rng::gen_range(&mut rng, 0..n)).collect()
            } else {
                (0..n).collect()
            };
            train_tree_on_indices(samples, idx, params, d, t as u64)
        })
        .collect();

    Ok(Forest {
        params: *params,
        trees,
        feature_dim: d,
    })
}

/// Unweighted mean over all trees of the leaf reached by `x`.
pub fn predict<T: Real>(forest: &Forest<T>, x: &[T]) -> Result<Point3<T>> {
    if x.len() != forest.feature_dim {
        return Err(Error::invalid_input(format!(
            "predict: feature vector has {} values, forest expects {}",
            x.len(),
            forest.feature_dim
        )));
    }
    let sum = forest
        .trees
        .iter()
        .fold(Point3::zero(), |acc, tree| acc + tree.predict(x));
    Ok(sum / T::from_usize(forest.trees.len()).unwrap())
}
