//! CART regression trees grown by variance reduction.

use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;

/// A split counts as positive only if its gain exceeds this fraction of the
/// node's sum of squared deviations. Gains below that are rounding noise.
pub const MIN_RELATIVE_GAIN: f64 = 1e-10;

/// Gains within this relative distance of the best gain are ties.
pub const TIE_RELATIVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Routes `x` left iff `x[feature] <= threshold`.
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// Mean of the training targets reaching this leaf.
        value: f64,
        n_samples: usize,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Calls `f` on every leaf, left to right.
    pub fn for_each_leaf(&self, f: &mut impl FnMut(f64, usize)) {
        match self {
            TreeNode::Leaf { value, n_samples } => f(*value, *n_samples),
            TreeNode::Internal { left, right, .. } => {
                left.for_each_leaf(f);
                right.for_each_leaf(f);
            }
        }
    }

    /// Whether any internal node splits on `feature`.
    pub fn uses_feature(&self, feature: usize) -> bool {
        match self {
            TreeNode::Leaf { .. } => false,
            TreeNode::Internal {
                feature: f, left, right, ..
            } => *f == feature || left.uses_feature(feature) || right.uses_feature(feature),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// `SSE(parent) - SSE(left) - SSE(right)`.
    pub gain: f64,
}

/// Threshold between two consecutive distinct sorted values, strictly below `hi`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if mid >= hi {
        lo
    } else {
        mid
    }
}

fn mean_of(y: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64
}

fn sse_of(y: &[f64], rows: &[usize]) -> f64 {
    let m = mean_of(y, rows);
    rows.iter().map(|&r| (y[r] - m).powi(2)).sum()
}

/// Best variance-reduction split of `rows` over `candidate_features`.
///
/// Thresholds are midpoints between consecutive distinct values; both children
/// must keep at least `min_samples_leaf` rows (duplicates count). Among splits
/// whose gain is within [`TIE_RELATIVE_TOLERANCE`] of the best, the lowest
/// feature index wins, then the lowest threshold. Returns `None` when no split
/// has positive gain.
pub fn best_split(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    candidate_features: &[usize],
    min_samples_leaf: usize,
) -> Option<Split> {
    let n = rows.len();
    let msl = min_samples_leaf.max(1);
    if n < 2 * msl {
        return None;
    }
    let first = y[rows[0]];
    if rows.iter().all(|&r| y[r] == first) {
        return None;
    }
    let min_gain = MIN_RELATIVE_GAIN * sse_of(y, rows);

    let mut features = candidate_features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<Split> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut suffix: Vec<f64> = vec![0.0; n + 1];
    for &feature in &features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x.get(r, feature), y[r])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + pairs[i].1;
        }
        let mut sum_left = 0.0;
        for i in 0..n - 1 {
            sum_left += pairs[i].1;
            let (lo, hi) = (pairs[i].0, pairs[i + 1].0);
            if lo == hi {
                continue;
            }
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_left < msl || n_right < msl {
                continue;
            }
            let mean_left = sum_left / n_left as f64;
            let mean_right = suffix[i + 1] / n_right as f64;
            let gain = (n_left as f64 * n_right as f64 / n as f64) * (mean_left - mean_right).powi(2);
            if gain <= min_gain {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => gain > b.gain * (1.0 + TIE_RELATIVE_TOLERANCE),
            };
            if better {
                best = Some(Split {
                    feature,
                    threshold: midpoint(lo, hi),
                    gain,
                });
            }
        }
    }
    best
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub max_features: usize,
}

/// Grows one tree over `rows`, adding each split's gain to `importance[feature]`.
pub(crate) fn grow(
    x: &Matrix,
    y: &[f64],
    rows: Vec<usize>,
    depth: usize,
    params: &GrowParams,
    rng: &mut ChaCha8Rng,
    importance: &mut [f64],
) -> TreeNode {
    let leaf = |rows: &[usize]| TreeNode::Leaf {
        value: mean_of(y, rows),
        n_samples: rows.len(),
    };
    if depth >= params.max_depth || rows.len() < 2 * params.min_samples_leaf {
        return leaf(&rows);
    }
    let p = x.n_cols();
    let candidates: Vec<usize> = if params.max_features >= p {
        (0..p).collect()
    } else {
        index::sample(rng, p, params.max_features).into_vec()
    };
    let Some(split) = best_split(x, y, &rows, &candidates, params.min_samples_leaf) else {
        return leaf(&rows);
    };
    importance[split.feature] += split.gain;
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| x.get(r, split.feature) <= split.threshold);
    let left = grow(x, y, left_rows, depth + 1, params, rng, importance);
    let right = grow(x, y, right_rows, depth + 1, params, rng, importance);
    TreeNode::Internal {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}
