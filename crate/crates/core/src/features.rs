//! Fixed-length feature vectors from variable-length force signals.
//!
//! Column order:
//!
//! ```text
//! f, n, vc, ap, mode_flag,
//! Fa_time_{min,q1,median,q3,max}, Fa_freq_{...},
//! Fz_time_{...},                  Fz_freq_{...}
//! ```
//!
//! The frequency-domain block summarizes [`magnitude_spectrum`] of the channel.

use std::f64::consts::PI;

use thiserror::Error;

use crate::data::{Dataset, ExperimentRecord};
use crate::matrix::Matrix;

/// Prefixes of the droppable sensor feature groups.
pub const SENSOR_GROUPS: [&str; 2] = ["Fa_", "Fz_"];

/// Configuration-parameter columns, always leading the feature vector.
pub const CONFIG_FEATURES: [&str; 5] = ["f", "n", "vc", "ap", "mode_flag"];

pub const N_FEATURES: usize = 25;

const STAT_NAMES: [&str; 5] = ["min", "q1", "median", "q3", "max"];

pub const MIN_SPECTRUM_LEN: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot summarize an empty series")]
    EmptySeries,
    #[error("sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("spectrum needs at least {MIN_SPECTRUM_LEN} samples, got {0}")]
    SeriesTooShort(usize),
    #[error("unknown feature group `{0}` (expected one of Fa_, Fz_)")]
    UnknownGroupPrefix(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("record `{id}`: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<FeatureError>,
    },
}

/// Five-number summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStats {
    pub fn to_array(self) -> [f64; 5] {
        [self.min, self.q1, self.median, self.q3, self.max]
    }
}

/// Quantile of sorted data, interpolating linearly at position `(n - 1) * p`.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    match sorted.get(lo + 1) {
        Some(&hi) if frac > 0.0 => sorted[lo] + frac * (hi - sorted[lo]),
        _ => sorted[lo],
    }
}

pub fn box_stats(series: &[f64]) -> Result<BoxStats, FeatureError> {
    if series.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    if let Some(index) = series.iter().position(|v| !v.is_finite()) {
        return Err(FeatureError::NonFiniteSample { index });
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(BoxStats {
        min: sorted[0],
        q1: sorted_quantile(&sorted, 0.25),
        median: sorted_quantile(&sorted, 0.5),
        q3: sorted_quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// One-sided DFT magnitudes `|X_k|`, `k = 1..=n/2`, of the mean-removed series.
///
/// No window is applied. Power-of-two lengths go through a radix-2 FFT, all
/// other lengths through the direct O(n²) sum.
pub fn magnitude_spectrum(series: &[f64]) -> Result<Vec<f64>, FeatureError> {
    let n = series.len();
    if n < MIN_SPECTRUM_LEN {
        return Err(FeatureError::SeriesTooShort(n));
    }
    if let Some(index) = series.iter().position(|v| !v.is_finite()) {
        return Err(FeatureError::NonFiniteSample { index });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let bins = if n.is_power_of_two() {
        fft_radix2(&centered)
    } else {
        dft_direct(&centered)
    };
    Ok(bins[1..=n / 2].iter().map(|&(re, im)| re.hypot(im)).collect())
}

/// Full DFT `X_k = Σ_j x_j e^{-2πi jk/n}` by direct summation.
pub fn dft_direct(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    let twiddles: Vec<(f64, f64)> = (0..n)
        .map(|m| {
            let angle = -2.0 * PI * m as f64 / n as f64;
            (angle.cos(), angle.sin())
        })
        .collect();
    (0..n)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (j, &v) in x.iter().enumerate() {
                let (c, s) = twiddles[(j * k) % n];
                re += v * c;
                im += v * s;
            }
            (re, im)
        })
        .collect()
}

/// Iterative Cooley–Tukey FFT. `x.len()` must be a power of two.
fn fft_radix2(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    debug_assert!(n.is_power_of_two());
    let bits = n.trailing_zeros();
    let mut buf: Vec<(f64, f64)> = vec![(0.0, 0.0); n];
    for (i, &v) in x.iter().enumerate() {
        let j = if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) };
        buf[j] = (v, 0.0);
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let angle = -2.0 * PI * k as f64 / len as f64;
                let (wr, wi) = (angle.cos(), angle.sin());
                let (ar, ai) = buf[start + k];
                let (br, bi) = buf[start + k + half];
                let (tr, ti) = (br * wr - bi * wi, br * wi + bi * wr);
                buf[start + k] = (ar + tr, ai + ti);
                buf[start + k + half] = (ar - tr, ai - ti);
            }
        }
        len *= 2;
    }
    buf
}

/// Feature values plus their column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub names: Vec<String>,
}

/// The 25 feature names in column order.
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = CONFIG_FEATURES.iter().map(|s| s.to_string()).collect();
    for channel in ["Fa", "Fz"] {
        for domain in ["time", "freq"] {
            for stat in STAT_NAMES {
                names.push(format!("{channel}_{domain}_{stat}"));
            }
        }
    }
    names
}

/// Sensor group of a feature name, or `None` for configuration parameters.
pub fn feature_group(name: &str) -> Option<&'static str> {
    SENSOR_GROUPS.iter().copied().find(|g| name.starts_with(g))
}

fn channel_features(series: &[f64], out: &mut Vec<f64>) -> Result<(), FeatureError> {
    out.extend(box_stats(series)?.to_array());
    out.extend(box_stats(&magnitude_spectrum(series)?)?.to_array());
    Ok(())
}

pub fn featurize(rec: &ExperimentRecord) -> Result<FeatureVector, FeatureError> {
    let wrap = |source: FeatureError| FeatureError::Record {
        id: rec.id.clone(),
        source: Box::new(source),
    };
    let p = &rec.params;
    let mut values = vec![p.feed_f, p.spindle_n, p.cutting_speed_vc, p.depth_ap, p.mode.flag()];
    channel_features(&rec.signals.fa, &mut values).map_err(wrap)?;
    channel_features(&rec.signals.fz, &mut values).map_err(wrap)?;
    debug_assert_eq!(values.len(), N_FEATURES);
    Ok(FeatureVector {
        values,
        names: feature_names(),
    })
}

/// Checks group prefixes against [`SENSOR_GROUPS`].
pub fn validate_groups<S: AsRef<str>>(groups: &[S]) -> Result<(), FeatureError> {
    for g in groups {
        if !SENSOR_GROUPS.contains(&g.as_ref()) {
            return Err(FeatureError::UnknownGroupPrefix(g.as_ref().to_string()));
        }
    }
    Ok(())
}

/// Feature matrix of a dataset (row i = record i) without the dropped groups.
pub fn featurize_dataset<S: AsRef<str>>(
    ds: &Dataset,
    drop_groups: &[S],
) -> Result<(Matrix, Vec<String>), FeatureError> {
    if ds.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    validate_groups(drop_groups)?;
    let all = feature_names();
    let keep: Vec<usize> = (0..all.len())
        .filter(|&j| !drop_groups.iter().any(|g| all[j].starts_with(g.as_ref())))
        .collect();
    let mut data = Vec::with_capacity(ds.len() * keep.len());
    for rec in ds.records() {
        let fv = featurize(rec)?;
        data.extend(keep.iter().map(|&j| fv.values[j]));
    }
    let names = keep.iter().map(|&j| all[j].clone()).collect();
    Ok((Matrix::new(ds.len(), keep.len(), data), names))
}

/// Feature matrix as CSV: header of names, one row per record.
pub fn features_to_csv(matrix: &Matrix, names: &[String]) -> String {
    let mut out = names.join(",");
    out.push('\n');
    for row in matrix.rows() {
        let cells: Vec<String> = row.iter().map(|v| crate::data::fmt_num(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
