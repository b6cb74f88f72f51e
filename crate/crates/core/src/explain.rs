//! Feature importance reports: impurity-decrease (Gini) and permutation
//! importance, subset-conditioned importance, and ranking comparison.
//!
//! Permutation scores are error increases: for feature `i`,
//! `score_i = mean_r [E(permuted_i,r) - E(original)]` where `E` is the chosen
//! error metric (MSE by default). Larger means more important. Each
//! `(feature, repeat)` pair shuffles the column with its own RNG stream seeded by
//! `derive_seed(seed, [i, r])`, so scores do not depend on scheduling.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{Forest, ForestError};
use crate::matrix::Matrix;
use crate::metrics::{ErrorMetric, MetricError};
use crate::seed::{derive_seed, rng_from_seed};

pub const REPORT_FORMAT: &str = "millsense-importance";
pub const REPORT_VERSION: u32 = 1;
pub const DEFAULT_REPEATS: usize = 10;
pub const MIN_SUBSET_ROWS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("model has no trees")]
    UnfittedModel,
    #[error("repeats must be >= 1")]
    ZeroRepeats,
    #[error("subset `{label}` selects {rows} rows, need at least {MIN_SUBSET_ROWS}")]
    SubsetTooSmall { label: String, rows: usize },
    #[error("cannot parse predicate `{0}`: expected `name<=value` or `name>value` atoms joined by `&&`")]
    BadPredicate(String),
    #[error("predicate references unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("reports cover different feature sets")]
    FeatureSetMismatch,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("malformed report: {0}")]
    Malformed(String),
}

impl From<ForestError> for ExplainError {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::Unfitted => ExplainError::UnfittedModel,
            other => ExplainError::DimensionMismatch(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMethod {
    Gini,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub format: String,
    pub version: u32,
    pub method: ImportanceMethod,
    pub subset_label: String,
    pub feature_names: Vec<String>,
    pub scores: Vec<f64>,
    /// Feature names by descending score; ties by ascending name.
    pub ranking: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<ErrorMetric>,
}

/// Feature names ordered by descending score, ties broken by ascending name.
pub fn rank_features(names: &[String], scores: &[f64]) -> Vec<String> {
    let mut idx: Vec<usize> = (0..names.len()).collect();
    idx.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => names[a].cmp(&names[b]),
        other => other,
    });
    idx.into_iter().map(|i| names[i].clone()).collect()
}

impl ImportanceReport {
    fn new(method: ImportanceMethod, subset_label: String, feature_names: Vec<String>, scores: Vec<f64>) -> Self {
        let ranking = rank_features(&feature_names, &scores);
        ImportanceReport {
            format: REPORT_FORMAT.to_string(),
            version: REPORT_VERSION,
            method,
            subset_label,
            feature_names,
            scores,
            ranking,
            repeats: None,
            seed: None,
            metric: None,
        }
    }

    pub fn score_of(&self, name: &str) -> Option<f64> {
        self.feature_names.iter().position(|n| n == name).map(|i| self.scores[i])
    }

    /// Sum of scores over features whose name satisfies `pred`.
    pub fn group_sum(&self, pred: impl Fn(&str) -> bool) -> f64 {
        self.feature_names
            .iter()
            .zip(&self.scores)
            .filter(|(n, _)| pred(n))
            .map(|(_, s)| s)
            .sum()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ExplainError> {
        let r: ImportanceReport = serde_json::from_str(text).map_err(|e| ExplainError::Malformed(e.to_string()))?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(ExplainError::Malformed(format!("unsupported {} v{}", r.format, r.version)));
        }
        if r.scores.len() != r.feature_names.len() {
            return Err(ExplainError::Malformed("scores and feature names differ in length".into()));
        }
        Ok(r)
    }
}

/// Normalized impurity-decrease importance of a fitted forest.
pub fn gini_report(model: &Forest) -> ImportanceReport {
    ImportanceReport::new(
        ImportanceMethod::Gini,
        "all".to_string(),
        model.feature_names.clone(),
        model.gini_importance(),
    )
}

/// Options for [`permutation_importance_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationOptions {
    pub repeats: usize,
    pub seed: u64,
    pub metric: ErrorMetric,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        PermutationOptions {
            repeats: DEFAULT_REPEATS,
            seed: 0,
            metric: ErrorMetric::Mse,
        }
    }
}

/// Permutation importance with MSE as the error metric.
pub fn permutation_importance(
    model: &Forest,
    x: &Matrix,
    y: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport, ExplainError> {
    permutation_importance_with(
        model,
        x,
        y,
        &PermutationOptions {
            repeats,
            seed,
            metric: ErrorMetric::Mse,
        },
        "all",
    )
}

pub fn permutation_importance_with(
    model: &Forest,
    x: &Matrix,
    y: &[f64],
    opts: &PermutationOptions,
    subset_label: &str,
) -> Result<ImportanceReport, ExplainError> {
    if model.trees.is_empty() {
        return Err(ExplainError::UnfittedModel);
    }
    if opts.repeats == 0 {
        return Err(ExplainError::ZeroRepeats);
    }
    if x.n_cols() != model.n_features() {
        return Err(ExplainError::DimensionMismatch(format!(
            "model expects {} features, matrix has {}",
            model.n_features(),
            x.n_cols()
        )));
    }
    if x.n_rows() != y.len() {
        return Err(ExplainError::DimensionMismatch(format!(
            "{} rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }

    let base_pred = model.predict_rows(x)?;
    let base_error = opts.metric.evaluate(y, &base_pred)?;

    let scores: Vec<f64> = (0..x.n_cols())
        .into_par_iter()
        .map(|feature| -> Result<f64, ExplainError> {
            let original = x.column(feature);
            let mut permuted = x.clone();
            let mut total = 0.0;
            for r in 0..opts.repeats {
                let mut rng = rng_from_seed(derive_seed(opts.seed, &[feature as u64, r as u64]));
                let mut col = original.clone();
                col.shuffle(&mut rng);
                for (i, v) in col.into_iter().enumerate() {
                    permuted.set(i, feature, v);
                }
                let pred = model.predict_rows(&permuted)?;
                total += opts.metric.evaluate(y, &pred)? - base_error;
            }
            Ok(total / opts.repeats as f64)
        })
        .collect::<Result<_, _>>()?;

    let mut report = ImportanceReport::new(
        ImportanceMethod::Permutation,
        subset_label.to_string(),
        model.feature_names.clone(),
        scores,
    );
    report.repeats = Some(opts.repeats);
    report.seed = Some(opts.seed);
    report.metric = Some(opts.metric);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    LessEq,
    Greater,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub feature: String,
    pub op: Comparison,
    pub value: f64,
}

impl Atom {
    fn holds(&self, v: f64) -> bool {
        match self.op {
            Comparison::LessEq => v <= self.value,
            Comparison::Greater => v > self.value,
        }
    }
}

/// Conjunction of threshold atoms, e.g. `f<=0.45 && ap>1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub atoms: Vec<Atom>,
    text: Vec<String>,
}

impl FromStr for Predicate {
    type Err = ExplainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExplainError::BadPredicate(s.to_string());
        let mut atoms = Vec::new();
        let mut text = Vec::new();
        for part in s.split("&&") {
            let part: String = part.chars().filter(|c| !c.is_whitespace()).collect();
            let (name, op, value) = if let Some((n, v)) = part.split_once("<=") {
                (n, Comparison::LessEq, v)
            } else if let Some((n, v)) = part.split_once('>') {
                (n, Comparison::Greater, v)
            } else {
                return Err(bad());
            };
            if name.is_empty() {
                return Err(bad());
            }
            let value: f64 = value.parse().map_err(|_| bad())?;
            if !value.is_finite() {
                return Err(bad());
            }
            atoms.push(Atom {
                feature: name.to_string(),
                op,
                value,
            });
            text.push(part.clone());
        }
        Ok(Predicate { atoms, text })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text.join("&&"))
    }
}

impl Predicate {
    /// Rows of `x` (columns named by `names`) satisfying every atom.
    pub fn select(&self, x: &Matrix, names: &[String]) -> Result<Vec<usize>, ExplainError> {
        let cols: Vec<usize> = self
            .atoms
            .iter()
            .map(|a| {
                names
                    .iter()
                    .position(|n| *n == a.feature)
                    .ok_or_else(|| ExplainError::UnknownFeature(a.feature.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok((0..x.n_rows())
            .filter(|&i| self.atoms.iter().zip(&cols).all(|(a, &c)| a.holds(x.get(i, c))))
            .collect())
    }
}

/// Permutation importance over the rows matching `predicate`.
pub fn subset_importance(
    model: &Forest,
    x: &Matrix,
    y: &[f64],
    predicate: &Predicate,
    opts: &PermutationOptions,
) -> Result<ImportanceReport, ExplainError> {
    if x.n_rows() != y.len() {
        return Err(ExplainError::DimensionMismatch(format!(
            "{} rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    let rows = predicate.select(x, &model.feature_names)?;
    let label = predicate.to_string();
    if rows.len() < MIN_SUBSET_ROWS {
        return Err(ExplainError::SubsetTooSmall {
            label,
            rows: rows.len(),
        });
    }
    let xs = x.select_rows(&rows);
    let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    permutation_importance_with(model, &xs, &ys, opts, &label)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankComparison {
    pub kendall_tau: f64,
    /// Features whose rank position differs, in the order of the first ranking.
    pub displaced: Vec<String>,
}

/// Kendall rank correlation between two rankings of the same features.
pub fn compare_rankings(a: &ImportanceReport, b: &ImportanceReport) -> Result<RankComparison, ExplainError> {
    let set_a: BTreeSet<&String> = a.ranking.iter().collect();
    let set_b: BTreeSet<&String> = b.ranking.iter().collect();
    if set_a != set_b || set_a.len() != a.ranking.len() || set_b.len() != b.ranking.len() {
        return Err(ExplainError::FeatureSetMismatch);
    }
    let m = a.ranking.len();
    let pos_b: Vec<usize> = a
        .ranking
        .iter()
        .map(|n| b.ranking.iter().position(|x| x == n).expect("sets are equal"))
        .collect();
    let displaced = a
        .ranking
        .iter()
        .enumerate()
        .filter(|(i, _)| pos_b[*i] != *i)
        .map(|(_, n)| n.clone())
        .collect();
    if m < 2 {
        return Ok(RankComparison {
            kendall_tau: 1.0,
            displaced,
        });
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..m {
        for j in i + 1..m {
            // In ranking `a`, feature i precedes feature j.
            if pos_b[i] < pos_b[j] {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let pairs = (m * (m - 1) / 2) as f64;
    Ok(RankComparison {
        kendall_tau: (concordant - discordant) as f64 / pairs,
        displaced,
    })
}
