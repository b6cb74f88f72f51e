//! Random forest regression.
//!
//! Each tree is grown on a bootstrap sample of size `n` drawn from its own
//! ChaCha8 stream seeded with `derive_seed(hp.seed, [t])`, so trees can be
//! built on any number of threads with bit-identical results. At every node
//! `max_features` candidate columns are drawn without replacement from the
//! same stream.
//!
//! The forest prediction is the plain mean of the tree predictions.
//! Impurity decrease for feature `j` is the sum of split gains on `j` over all
//! trees, divided by `n·T`; [`Forest::gini_importance`] normalizes it to sum to one.

mod persist;
mod tree;

pub use persist::{
    forest_from_str, forest_to_string, load_forest, save_forest, PersistError, FORMAT_NAME, FORMAT_VERSION,
};
pub use tree::{best_split, midpoint, Split, TreeNode, MIN_RELATIVE_GAIN, TIE_RELATIVE_TOLERANCE};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::seed::{derive_seed, rng_from_seed};
use rand::Rng;
use tree::{grow, GrowParams};

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFiniteInput(String),
    #[error("need at least {needed} samples for min_samples_leaf, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid hyperparameter `{field}`: {message}")]
    InvalidHyperParams { field: &'static str, message: String },
    #[error("forest has no trees")]
    Unfitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per node; `None` means `ceil(p / 3)`.
    pub max_features: Option<usize>,
    pub seed: u64,
    /// Draw a bootstrap sample per tree. Disabling it trains every tree on
    /// all rows, which only makes sense for testing.
    pub bootstrap: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            n_trees: 100,
            max_depth: 12,
            min_samples_leaf: 2,
            max_features: None,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl HyperParams {
    pub fn resolved_max_features(&self, p: usize) -> usize {
        self.max_features.unwrap_or_else(|| p.div_ceil(3))
    }

    fn validate(&self, p: usize) -> Result<(), ForestError> {
        let bad = |field, message: String| Err(ForestError::InvalidHyperParams { field, message });
        if self.n_trees < 1 {
            return bad("n_trees", "must be >= 1".into());
        }
        if self.max_depth < 1 {
            return bad("max_depth", "must be >= 1".into());
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf", "must be >= 1".into());
        }
        let mf = self.resolved_max_features(p);
        if mf < 1 || mf > p {
            return bad("max_features", format!("must lie in [1, {p}], got {mf}"));
        }
        Ok(())
    }
}

/// Free-form provenance stored alongside a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub target: Option<String>,
    pub split_seed: Option<u64>,
    pub test_fraction: Option<f64>,
    #[serde(default)]
    pub dropped_groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
    pub hyper: HyperParams,
    pub feature_names: Vec<String>,
    /// Accumulated weighted variance reduction per feature.
    pub impurity_decrease: Vec<f64>,
    pub meta: ModelMeta,
}

/// Per-tree seed: `derive_seed(seed, [tree_index])`.
pub fn tree_seed(seed: u64, tree_index: usize) -> u64 {
    derive_seed(seed, &[tree_index as u64])
}

pub fn fit(x: &Matrix, y: &[f64], feature_names: Vec<String>, hp: &HyperParams) -> Result<Forest, ForestError> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if y.len() != n {
        return Err(ForestError::DimensionMismatch(format!("{n} rows but {} targets", y.len())));
    }
    if feature_names.len() != p {
        return Err(ForestError::DimensionMismatch(format!(
            "{p} columns but {} feature names",
            feature_names.len()
        )));
    }
    if p == 0 {
        return Err(ForestError::DimensionMismatch("no feature columns".into()));
    }
    hp.validate(p)?;
    let needed = 2 * hp.min_samples_leaf;
    if n < needed {
        return Err(ForestError::TooFewSamples { needed, got: n });
    }
    if !x.all_finite() {
        return Err(ForestError::NonFiniteInput("feature matrix".into()));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(ForestError::NonFiniteInput("targets".into()));
    }

    let params = GrowParams {
        max_depth: hp.max_depth,
        min_samples_leaf: hp.min_samples_leaf,
        max_features: hp.resolved_max_features(p),
    };
    let grown: Vec<(TreeNode, Vec<f64>)> = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(tree_seed(hp.seed, t));
            let rows: Vec<usize> = if hp.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut gains = vec![0.0; p];
            let root = grow(x, y, rows, 0, &params, &mut rng, &mut gains);
            (root, gains)
        })
        .collect();

    let scale = (n * hp.n_trees) as f64;
    let mut impurity_decrease = vec![0.0; p];
    let mut trees = Vec::with_capacity(hp.n_trees);
    for (root, gains) in grown {
        for (acc, g) in impurity_decrease.iter_mut().zip(&gains) {
            *acc += g;
        }
        trees.push(root);
    }
    for v in &mut impurity_decrease {
        *v /= scale;
    }

    Ok(Forest {
        trees,
        hyper: *hp,
        feature_names,
        impurity_decrease,
        meta: ModelMeta::default(),
    })
}

impl Forest {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check_fitted(&self) -> Result<(), ForestError> {
        if self.trees.is_empty() {
            Err(ForestError::Unfitted)
        } else {
            Ok(())
        }
    }

    /// `(1/T)·Σ_t y_t(x)`, summed in tree order.
    pub fn predict(&self, x: &[f64]) -> Result<f64, ForestError> {
        self.check_fitted()?;
        if x.len() != self.n_features() {
            return Err(ForestError::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn predict_rows(&self, x: &Matrix) -> Result<Vec<f64>, ForestError> {
        x.rows().map(|row| self.predict(row)).collect()
    }

    /// Impurity decrease normalized to sum to one; all zeros if no tree split.
    pub fn gini_importance(&self) -> Vec<f64> {
        let total: f64 = self.impurity_decrease.iter().sum();
        if total > 0.0 {
            self.impurity_decrease.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; self.impurity_decrease.len()]
        }
    }

    /// Indices of features that at least one tree splits on.
    pub fn used_features(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&j| self.trees.iter().any(|t| t.uses_feature(j)))
            .collect()
    }
}
