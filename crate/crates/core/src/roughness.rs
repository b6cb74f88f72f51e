//! Profile roughness parameters.
//!
//! All parameters act on the raw profile centered on its arithmetic mean line;
//! no ISO 16610 filtering is applied. A peak is a sample strictly greater than
//! both neighbours, a valley one strictly smaller; plateaus are not merged.
//!
//! `rsm_paper` is the mean height of the five highest peaks. It is *not* the
//! ISO RSm (mean width of profile elements) and is named apart for that reason.

use thiserror::Error;

pub const MIN_PROFILE_LEN: usize = 10;

/// Number of peaks/valleys averaged by `rz` and `rsm_paper`.
pub const EXTREMA_COUNT: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoughnessError {
    #[error("profile needs at least {MIN_PROFILE_LEN} samples, got {0}")]
    TooShort(usize),
    #[error("profile spacing must be finite and > 0, got {0}")]
    BadSpacing(f64),
    #[error("profile height {index} is not finite")]
    NonFinite { index: usize },
    #[error("profile has {peaks} peaks and {valleys} valleys, need {needed} of each")]
    TooFewExtrema { peaks: usize, valleys: usize, needed: usize },
    #[error("profile has zero variance; skewness and kurtosis are undefined")]
    ZeroVariance,
}

/// Sampled surface profile: heights in µm, `spacing` µm apart.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    heights: Vec<f64>,
    spacing: f64,
}

impl Profile {
    pub fn new(heights: Vec<f64>, spacing: f64) -> Result<Self, RoughnessError> {
        if heights.len() < MIN_PROFILE_LEN {
            return Err(RoughnessError::TooShort(heights.len()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(RoughnessError::BadSpacing(spacing));
        }
        if let Some(index) = heights.iter().position(|h| !h.is_finite()) {
            return Err(RoughnessError::NonFinite { index });
        }
        Ok(Profile { heights, spacing })
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }
}

/// Roughness parameters of one profile.
///
/// Extrema-based fields are `None` when the profile has too few peaks or
/// valleys; moment ratios are `None` for a flat profile. The `require_*`
/// accessors turn those into errors.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughnessParams {
    pub ra: f64,
    pub rq: f64,
    pub rt: f64,
    pub rdq: f64,
    pub rz: Option<f64>,
    pub rsm_paper: Option<f64>,
    /// Height of the highest peak above the mean line.
    pub rp_max: Option<f64>,
    pub rsk: Option<f64>,
    pub rku: Option<f64>,
    peaks: usize,
    valleys: usize,
}

impl RoughnessParams {
    fn extrema_error(&self) -> RoughnessError {
        RoughnessError::TooFewExtrema {
            peaks: self.peaks,
            valleys: self.valleys,
            needed: EXTREMA_COUNT,
        }
    }

    pub fn require_rz(&self) -> Result<f64, RoughnessError> {
        self.rz.ok_or_else(|| self.extrema_error())
    }

    pub fn require_rsm_paper(&self) -> Result<f64, RoughnessError> {
        self.rsm_paper.ok_or_else(|| self.extrema_error())
    }

    pub fn require_rp_max(&self) -> Result<f64, RoughnessError> {
        self.rp_max.ok_or_else(|| self.extrema_error())
    }

    pub fn require_rsk(&self) -> Result<f64, RoughnessError> {
        self.rsk.ok_or(RoughnessError::ZeroVariance)
    }

    pub fn require_rku(&self) -> Result<f64, RoughnessError> {
        self.rku.ok_or(RoughnessError::ZeroVariance)
    }
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

pub fn compute_roughness(p: &Profile) -> RoughnessParams {
    let mu = mean(p.heights.iter().copied());
    let z: Vec<f64> = p.heights.iter().map(|h| h - mu).collect();

    let ra = mean(z.iter().map(|v| v.abs()));
    let m2 = mean(z.iter().map(|v| v * v));
    let rq = m2.sqrt();
    let (lo, hi) = z
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let rt = hi - lo;
    let rdq = mean(z.windows(2).map(|w| ((w[1] - w[0]) / p.spacing).powi(2))).sqrt();

    let (rsk, rku) = if m2 > 0.0 {
        let m3 = mean(z.iter().map(|v| v.powi(3)));
        let m4 = mean(z.iter().map(|v| v.powi(4)));
        (Some(m3 / rq.powi(3)), Some(m4 / (m2 * m2)))
    } else {
        (None, None)
    };

    let mut peaks: Vec<f64> = Vec::new();
    let mut valleys: Vec<f64> = Vec::new();
    for w in z.windows(3) {
        if w[1] > w[0] && w[1] > w[2] {
            peaks.push(w[1]);
        } else if w[1] < w[0] && w[1] < w[2] {
            valleys.push(w[1]);
        }
    }
    peaks.sort_by(|a, b| b.total_cmp(a));
    valleys.sort_by(f64::total_cmp);

    let rp_max = peaks.first().copied();
    let (rz, rsm_paper) = if peaks.len() >= EXTREMA_COUNT && valleys.len() >= EXTREMA_COUNT {
        let top = mean(peaks[..EXTREMA_COUNT].iter().copied());
        let bottom = mean(valleys[..EXTREMA_COUNT].iter().map(|v| v.abs()));
        (Some(top + bottom), Some(top))
    } else {
        (None, None)
    };

    RoughnessParams {
        ra,
        rq,
        rt,
        rdq,
        rz,
        rsm_paper,
        rp_max,
        rsk,
        rku,
        peaks: peaks.len(),
        valleys: valleys.len(),
    }
}
