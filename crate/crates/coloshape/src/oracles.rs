//! Independent reference implementations used as test oracles.
//!
//! Compiled only with the `test-oracles` feature. Nothing here shares code
//! with the production paths it checks: the CART oracle enumerates every
//! split with direct two-pass statistics instead of sorted prefix sums.

use crate::forest::{Sample, TreeNode};
use crate::geometry::Point3;
use crate::scalar::Real;

/// Impurity-decrease floor, matching the trainer's contract.
const MIN_DECREASE: f64 = 1e-12;

/// Tie band matching the trainer: decreases within this fraction of the
/// node impurity resolve by (lowest feature, lowest threshold).
const TIE_BAND: f64 = 1e-10;

fn mean_of<T: Real>(samples: &[Sample<T>], idx: &[usize]) -> Point3<T> {
    let mut sx = T::zero();
    let mut sy = T::zero();
    let mut sz = T::zero();
    for &i in idx {
        sx += samples[i].1.x;
        sy += samples[i].1.y;
        sz += samples[i].1.z;
    }
    let n = T::from_usize(idx.len().max(1)).unwrap();
    Point3::new(sx / n, sy / n, sz / n)
}

/// Two-pass sum of squared deviations from the subset mean, summed over
/// the three output coordinates.
fn sse_of<T: Real>(samples: &[Sample<T>], idx: &[usize]) -> T {
    if idx.is_empty() {
        return T::zero();
    }
    let m = mean_of(samples, idx);
    let mut acc = T::zero();
    for &i in idx {
        let y = samples[i].1;
        acc += (y.x - m.x) * (y.x - m.x)
            + (y.y - m.y) * (y.y - m.y)
            + (y.z - m.z) * (y.z - m.z);
    }
    acc
}

/// Exhaustive-search CART: every feature, every midpoint between distinct
/// consecutive values, children statistics recomputed from scratch. Same
/// contract as the production trainer (midpoint thresholds, `<=` routes
/// left, children >= `min_samples_leaf`, decrease > 1e-12, ties to lowest
/// feature then lowest threshold) so results must agree; the computation
/// path is deliberately different.
pub fn exhaustive_cart_tree<T: Real>(
    samples: &[Sample<T>],
    min_samples_leaf: usize,
    max_depth: Option<usize>,
) -> TreeNode<T> {
    grow(samples, (0..samples.len()).collect(), min_samples_leaf, max_depth, 0)
}

fn grow<T: Real>(
    samples: &[Sample<T>],
    idx: Vec<usize>,
    min_samples_leaf: usize,
    max_depth: Option<usize>,
    depth: usize,
) -> TreeNode<T> {
    let n = idx.len();
    let d = samples[0].0.len();
    let depth_ok = max_depth.map_or(true, |lim| depth < lim);

    let mut best: Option<(usize, T, T)> = None;
    if depth_ok {
        let sse_parent = sse_of(samples, &idx);
        let tie_band = sse_parent * T::from_f64_const(TIE_BAND);
        for f in 0..d {
            let mut values: Vec<T> = idx.iter().map(|&i| samples[i].0[f]).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            values.dedup();
            for w in values.windows(2) {
                let thr = (w[0] + w[1]) * T::from_f64_const(0.5);
                if !(thr < w[1]) {
                    continue;
                }
                let left: Vec<usize> = idx
                    .iter()
                    .copied()
                    .filter(|&i| samples[i].0[f] <= thr)
                    .collect();
                let right: Vec<usize> = idx
                    .iter()
                    .copied()
                    .filter(|&i| samples[i].0[f] > thr)
                    .collect();
                if left.len() < min_samples_leaf || right.len() < min_samples_leaf {
                    continue;
                }
                let decrease =
                    sse_parent - sse_of(samples, &left) - sse_of(samples, &right);
                if decrease > T::from_f64_const(MIN_DECREASE)
                    && best.as_ref().map_or(true, |b| decrease > b.2 + tie_band)
                {
                    best = Some((f, thr, decrease));
                }
            }
        }
    }

    match best {
        None => TreeNode::Leaf {
            mean: mean_of(samples, &idx),
            n_samples: n,
        },
        Some((f, thr, _)) => {
            let (left, right): (Vec<usize>, Vec<usize>) =
                idx.into_iter().partition(|&i| samples[i].0[f] <= thr);
            TreeNode::Split {
                feature_index: f,
                threshold: thr,
                left: Box::new(grow(samples, left, min_samples_leaf, max_depth, depth + 1)),
                right: Box::new(grow(samples, right, min_samples_leaf, max_depth, depth + 1)),
            }
        }
    }
}

/// Structural equality with bitwise thresholds. Leaf means are compared by
/// the caller through predictions (different summation orders round
/// differently).
pub fn trees_match_bitwise(a: &TreeNode<f64>, b: &TreeNode<f64>) -> bool {
    match (a, b) {
        (
            TreeNode::Split {
                feature_index: fa,
                threshold: ta,
                left: la,
                right: ra,
            },
            TreeNode::Split {
                feature_index: fb,
                threshold: tb,
                left: lb,
                right: rb,
            },
        ) => {
            fa == fb
                && ta.to_bits() == tb.to_bits()
                && trees_match_bitwise(la, lb)
                && trees_match_bitwise(ra, rb)
        }
        (TreeNode::Leaf { n_samples: na, .. }, TreeNode::Leaf { n_samples: nb, .. }) => na == nb,
        _ => false,
    }
}
