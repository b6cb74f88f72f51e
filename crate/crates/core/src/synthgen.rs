//! Synthetic milling datasets with known ground truth.
//!
//! Each experiment draws `(f, n, vc, ap)` uniformly from the configured ranges
//! and the cutting mode 50/50. Then:
//!
//! * **Surface profile.** Feed marks with wavelength `λ = 1000·f / 2` µm (two
//!   inserts) and amplitude
//!
//!   ```text
//!   A = 1.8 · f^0.9 · (1 + 0.25·ap) · m · (1 + noise_sd·ε),   m = 1.0 (up) | 1.2 (down)
//!   z(x) = A · [sin(2πx/λ) + h·sin(4πx/λ + π/3)] + N(0, (0.5·noise_sd·A)²)
//!   ```
//!
//!   with `h = 0.25` (up) or `0.4` (down), sampled at 1 µm over 4096 points.
//!   Targets are the roughness parameters of that profile: `Ramean ← ra`,
//!   `Rzmean ← rz`, `Rkumean ← rku`, `Rdqmaxmean ← rdq`, `Rp1maxmean ← rp_max`.
//! * **Active force** `fa`: tooth-passing sinusoid at `2·n/60` Hz with mean and
//!   amplitude proportional to `ap·f`, plus Gaussian noise.
//! * **Normal force** `fz`: the same construction with a smaller gain
//!   ([`SensorMode::Informative`]) or pure Gaussian noise ([`SensorMode::PureNoise`]).
//!
//! Signal lengths vary per experiment between 256 and 1024 samples at 5 kHz.
//! Everything flows from one ChaCha8 stream seeded with `seed`.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    CuttingMode, DataError, Dataset, ExperimentRecord, ForceSignals, ProcessParams, RoughnessTargets,
};
use crate::roughness::{compute_roughness, Profile, RoughnessError};
use crate::seed::rng_from_seed;

pub const PROFILE_LEN: usize = 4096;
pub const PROFILE_SPACING_UM: f64 = 1.0;
pub const SAMPLE_RATE_HZ: f64 = 5000.0;
pub const SIGNAL_LEN_RANGE: (usize, usize) = (256, 1024);

const FA_GAIN: f64 = 600.0;
const FZ_GAIN: f64 = 250.0;
const FORCE_NOISE_PER_UNIT_SD: f64 = 250.0;
const PURE_NOISE_SD: f64 = 20.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("experiment {id}: {source}")]
    Roughness {
        id: String,
        #[source]
        source: RoughnessError,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

fn config_error(field: &str, message: impl Into<String>) -> SynthError {
    SynthError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SensorMode {
    /// `fz` follows the same process-driven construction as `fa`.
    #[default]
    Informative,
    /// `fz` is Gaussian noise independent of everything else.
    PureNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamRanges {
    pub f: (f64, f64),
    pub n: (f64, f64),
    pub vc: (f64, f64),
    pub ap: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            f: (0.1, 0.8),
            n: (2000.0, 8000.0),
            vc: (120.0, 500.0),
            ap: (0.5, 3.0),
        }
    }
}

/// Generator configuration. Also the schema of the `generate` TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_experiments: usize,
    pub seed: u64,
    pub param_ranges: ParamRanges,
    pub noise_sd: f64,
    pub irrelevant_sensor_mode: SensorMode,
}

pub const DEFAULT_NOISE_SD: f64 = 0.02;

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_experiments: 500,
            seed: 0,
            param_ranges: ParamRanges::default(),
            noise_sd: DEFAULT_NOISE_SD,
            irrelevant_sensor_mode: SensorMode::Informative,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_experiments < 10 {
            return Err(config_error("n_experiments", format!("must be >= 10, got {}", self.n_experiments)));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(config_error("noise_sd", format!("must be finite and >= 0, got {}", self.noise_sd)));
        }
        let r = &self.param_ranges;
        for (name, (lo, hi)) in [("f", r.f), ("n", r.n), ("vc", r.vc), ("ap", r.ap)] {
            let field = format!("param_ranges.{name}");
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                return Err(config_error(&field, format!("need 0 < low < high, got ({lo}, {hi})")));
            }
        }
        // The profile must hold at least ten feed marks so Rz sees enough extrema.
        let max_wavelength = 500.0 * r.f.1;
        if max_wavelength * 10.0 > PROFILE_LEN as f64 * PROFILE_SPACING_UM {
            return Err(config_error("param_ranges.f", "upper feed too large for the synthetic profile length"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let field = message
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".to_string());
            config_error(&field, e.to_string().trim_end())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Noise-free profile amplitude in µm.
pub fn profile_amplitude(f: f64, ap: f64, mode: CuttingMode) -> f64 {
    let m = match mode {
        CuttingMode::UpMilling => 1.0,
        CuttingMode::DownMilling => 1.2,
    };
    1.8 * f.powf(0.9) * (1.0 + 0.25 * ap) * m
}

fn harmonic_ratio(mode: CuttingMode) -> f64 {
    match mode {
        CuttingMode::UpMilling => 0.25,
        CuttingMode::DownMilling => 0.4,
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Synthetic profile for one experiment.
pub fn synth_profile(params: &ProcessParams, noise_sd: f64, rng: &mut ChaCha8Rng) -> Profile {
    let amp_noise = if noise_sd > 0.0 { noise_sd * normal(rng) } else { 0.0 };
    let base = profile_amplitude(params.feed_f, params.depth_ap, params.mode);
    let amplitude = base * (1.0 + amp_noise).max(0.1);
    let wavelength = 500.0 * params.feed_f;
    let h = harmonic_ratio(params.mode);
    let jitter_sd = 0.5 * noise_sd * amplitude;
    let heights = (0..PROFILE_LEN)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 * PROFILE_SPACING_UM / wavelength;
            let clean = amplitude * (theta.sin() + h * (2.0 * theta + PI / 3.0).sin());
            if jitter_sd > 0.0 {
                clean + jitter_sd * normal(rng)
            } else {
                clean
            }
        })
        .collect();
    Profile::new(heights, PROFILE_SPACING_UM).expect("synthetic profile is valid by construction")
}

/// Roughness targets derived from a synthetic profile.
pub fn targets_from_profile(profile: &Profile) -> Result<RoughnessTargets, RoughnessError> {
    let r = compute_roughness(profile);
    let mut t = RoughnessTargets::new();
    t.insert("Ramean", r.ra);
    t.insert("Rzmean", r.require_rz()?);
    t.insert("Rkumean", r.require_rku()?);
    t.insert("Rp1maxmean", r.require_rp_max()?);
    t.insert("Rdqmaxmean", r.rdq);
    Ok(t)
}

fn force_series(
    len: usize,
    gain: f64,
    params: &ProcessParams,
    phase: f64,
    modulation: f64,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let tooth_hz = 2.0 * params.spindle_n / 60.0;
    let level = gain * params.depth_ap * params.feed_f;
    (0..len)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE_HZ;
            let clean = level * (1.0 + modulation * (2.0 * PI * tooth_hz * t + phase).sin());
            if noise > 0.0 {
                clean + noise * normal(rng)
            } else {
                clean
            }
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..hi)
}

pub fn generate(cfg: &SynthConfig) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let width = cfg.n_experiments.to_string().len().max(4);
    let r = &cfg.param_ranges;
    let force_noise = cfg.noise_sd * FORCE_NOISE_PER_UNIT_SD;

    let mut records = Vec::with_capacity(cfg.n_experiments);
    for i in 0..cfg.n_experiments {
        let id = format!("exp{i:0width$}");
        let params = ProcessParams {
            feed_f: uniform(&mut rng, r.f),
            spindle_n: uniform(&mut rng, r.n),
            cutting_speed_vc: uniform(&mut rng, r.vc),
            depth_ap: uniform(&mut rng, r.ap),
            mode: if rng.random_bool(0.5) {
                CuttingMode::DownMilling
            } else {
                CuttingMode::UpMilling
            },
        };

        let profile = synth_profile(&params, cfg.noise_sd, &mut rng);
        let targets = targets_from_profile(&profile).map_err(|source| SynthError::Roughness {
            id: id.clone(),
            source,
        })?;

        let len_a = rng.random_range(SIGNAL_LEN_RANGE.0..=SIGNAL_LEN_RANGE.1);
        let len_z = rng.random_range(SIGNAL_LEN_RANGE.0..=SIGNAL_LEN_RANGE.1);
        let phase = rng.random_range(0.0..2.0 * PI);
        let fa = force_series(len_a, FA_GAIN, &params, phase, 0.6, force_noise, &mut rng);
        let fz = match cfg.irrelevant_sensor_mode {
            SensorMode::Informative => {
                force_series(len_z, FZ_GAIN, &params, phase + PI / 2.0, 0.4, force_noise, &mut rng)
            }
            SensorMode::PureNoise => (0..len_z).map(|_| PURE_NOISE_SD * normal(&mut rng)).collect(),
        };

        records.push(ExperimentRecord {
            id,
            params,
            signals: ForceSignals {
                fa,
                fz,
                sample_rate_hz: SAMPLE_RATE_HZ,
            },
            targets,
        });
    }
    Ok(Dataset::new(records)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::featurize_dataset;

    fn small(seed: u64, noise_sd: f64) -> SynthConfig {
        SynthConfig {
            n_experiments: 20,
            seed,
            noise_sd,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(3, 0.0)).unwrap();
        let b = generate(&small(3, 0.0)).unwrap();
        assert_eq!(a, b);
        let c = generate(&small(4, 0.0)).unwrap();
        assert_ne!(a, c);
        assert_eq!(generate(&small(5, 0.05)).unwrap(), generate(&small(5, 0.05)).unwrap());
    }

    #[test]
    fn noiseless_targets_depend_only_on_params() {
        let params = ProcessParams {
            feed_f: 0.37,
            spindle_n: 4000.0,
            cutting_speed_vc: 250.0,
            depth_ap: 1.2,
            mode: CuttingMode::DownMilling,
        };
        let mut other = params;
        other.spindle_n = 7000.0;
        other.cutting_speed_vc = 400.0;
        let t1 = targets_from_profile(&synth_profile(&params, 0.0, &mut rng_from_seed(1))).unwrap();
        let t2 = targets_from_profile(&synth_profile(&other, 0.0, &mut rng_from_seed(99))).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn targets_satisfy_roughness_invariants() {
        let ds = generate(&small(11, 0.05)).unwrap();
        for rec in ds.records() {
            let t = &rec.targets;
            assert!(t.get("Ramean").unwrap() > 0.0);
            assert!(t.get("Rzmean").unwrap() > 0.0);
            assert!(t.get("Rkumean").unwrap() >= 1.0);
            assert!(t.get("Rdqmaxmean").unwrap() >= 0.0);
            assert!(t.get("Rp1maxmean").unwrap() > 0.0);
            let len = rec.signals.fa.len();
            assert!((SIGNAL_LEN_RANGE.0..=SIGNAL_LEN_RANGE.1).contains(&len));
        }
    }

    #[test]
    fn config_validation_names_fields() {
        let cfg = SynthConfig {
            noise_sd: -1.0,
            ..SynthConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(SynthError::Config { field, .. }) if field == "noise_sd"));
        let mut cfg = SynthConfig::default();
        cfg.param_ranges.ap = (2.0, 1.0);
        assert!(matches!(cfg.validate(), Err(SynthError::Config { field, .. }) if field == "param_ranges.ap"));
        let cfg = SynthConfig {
            n_experiments: 5,
            ..SynthConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(SynthError::Config { field, .. }) if field == "n_experiments"));
    }

    #[test]
    fn toml_config() {
        let cfg = SynthConfig::from_toml(
            "n_experiments = 40\nseed = 9\nnoise_sd = 0.01\nirrelevant_sensor_mode = \"pure_noise\"\n\
             [param_ranges]\nf = [0.1, 0.5]\nn = [1000.0, 2000.0]\nvc = [100.0, 200.0]\nap = [1.0, 2.0]\n",
        )
        .unwrap();
        assert_eq!(cfg.n_experiments, 40);
        assert_eq!(cfg.irrelevant_sensor_mode, SensorMode::PureNoise);
        assert_eq!(cfg.param_ranges.f, (0.1, 0.5));

        let err = SynthConfig::from_toml("n_experiments = \"many\"\n").unwrap_err();
        assert!(err.to_string().contains("n_experiments"), "{err}");
        let err = SynthConfig::from_toml("bogus_key = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn pure_noise_fz_is_uncorrelated_with_ra() {
        let cfg = SynthConfig {
            irrelevant_sensor_mode: SensorMode::PureNoise,
            ..SynthConfig::default()
        };
        let ds = generate(&cfg).unwrap();
        let ra = ds.target_values("Ramean").unwrap();
        let (x, names) = featurize_dataset::<&str>(&ds, &[]).unwrap();
        for (j, name) in names.iter().enumerate().filter(|(_, n)| n.starts_with("Fz_")) {
            let r = pearson(&x.column(j), &ra);
            assert!(r.abs() < 0.15, "{name}: r = {r}");
        }
    }
}
