//! Surface-roughness prediction for milling with random forests, feature
//! importance analysis and sensor ablation.
//!
//! The pipeline runs in this order:
//!
//! 1. [`data`] loads experiment records (process parameters, force signals,
//!    roughness targets) and splits them into train/test sets.
//! 2. [`features`] turns each record into a fixed 25-column feature vector:
//!    configuration parameters plus five-number summaries of the active (`Fa_`)
//!    and normal (`Fz_`) force channels in time and frequency domain.
//! 3. [`forest`] fits CART regression forests and tracks impurity decrease.
//! 4. [`explain`] ranks features by impurity-decrease (Gini) or permutation
//!    importance, optionally on a filtered subset of rows.
//! 5. [`ablation`] drops whole sensor groups, retrains, and compares metrics.
//!
//! [`synthgen`] produces datasets with known structure in the same on-disk
//! format, using [`roughness`] to derive targets from synthetic profiles.

pub mod ablation;
pub mod cli;
pub mod data;
pub mod explain;
pub mod features;
pub mod forest;
pub mod matrix;
pub mod metrics;
pub mod roughness;
pub mod seed;
pub mod synthgen;

pub use matrix::Matrix;
