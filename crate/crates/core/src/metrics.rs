//! Regression error metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest |actual| accepted by [`mape`].
pub const MAPE_MIN_ACTUAL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {actual} actual vs {predicted} predicted values")]
    DimensionMismatch { actual: usize, predicted: usize },
    #[error("cannot evaluate empty vectors")]
    EmptyInput,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("actual value at index {index} is {value}, too close to zero for MAPE")]
    NearZeroActual { index: usize, value: f64 },
}

fn check(y_true: &[f64], y_pred: &[f64]) -> Result<(), MetricError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricError::DimensionMismatch {
            actual: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if let Some(i) = y_true
        .iter()
        .zip(y_pred)
        .position(|(a, b)| !(a.is_finite() && b.is_finite()))
    {
        return Err(MetricError::NonFinite(i));
    }
    Ok(())
}

fn mean_of(y_true: &[f64], y_pred: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    y_true.iter().zip(y_pred).map(|(&a, &b)| f(a, b)).sum::<f64>() / y_true.len() as f64
}

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check(y_true, y_pred)?;
    Ok(mean_of(y_true, y_pred, |a, b| (a - b) * (a - b)))
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check(y_true, y_pred)?;
    Ok(mean_of(y_true, y_pred, |a, b| (a - b).abs()))
}

/// Mean absolute percentage error, in percent.
pub fn mape(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check(y_true, y_pred)?;
    if let Some(index) = y_true.iter().position(|a| a.abs() < MAPE_MIN_ACTUAL) {
        return Err(MetricError::NearZeroActual {
            index,
            value: y_true[index],
        });
    }
    Ok(100.0 * mean_of(y_true, y_pred, |a, b| ((a - b) / a).abs()))
}

/// Error metric used inside permutation importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMetric {
    #[default]
    Mse,
    Mae,
}

impl ErrorMetric {
    pub fn evaluate(self, y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
        match self {
            ErrorMetric::Mse => mse(y_true, y_pred),
            ErrorMetric::Mae => mae(y_true, y_pred),
        }
    }
}

/// MSE, MAE and MAPE of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionScores {
    pub mse: f64,
    pub mae: f64,
    pub mape: f64,
}

impl RegressionScores {
    pub fn compute(y_true: &[f64], y_pred: &[f64]) -> Result<Self, MetricError> {
        Ok(RegressionScores {
            mse: mse(y_true, y_pred)?,
            mae: mae(y_true, y_pred)?,
            mape: mape(y_true, y_pred)?,
        })
    }
}
