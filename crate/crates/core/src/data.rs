//! Experiment data model, on-disk formats and train/test splitting.
//!
//! A dataset lives in two places:
//!
//! * `experiments.csv` with the exact header
//!   `id,f_mm_per_rot,n_rpm,vc_m_per_min,ap_mm,mode,Ramean,Rzmean,Rkumean,Rp1maxmean,Rdqmaxmean`,
//!   optionally followed by extra target columns;
//! * one file per experiment and force channel, `<signals_dir>/<id>_fa.csv` and
//!   `<id>_fz.csv`, holding a `sample_rate_hz,<value>` header and one sample per line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::rng_from_seed;

/// Fixed leading columns of `experiments.csv`.
pub const METADATA_HEADER: [&str; 11] = [
    "id",
    "f_mm_per_rot",
    "n_rpm",
    "vc_m_per_min",
    "ap_mm",
    "mode",
    "Ramean",
    "Rzmean",
    "Rkumean",
    "Rp1maxmean",
    "Rdqmaxmean",
];

/// Target columns every metadata file carries.
pub const STANDARD_TARGETS: [&str; 5] = ["Ramean", "Rzmean", "Rkumean", "Rp1maxmean", "Rdqmaxmean"];

/// Minimum samples per force channel.
pub const MIN_SIGNAL_LEN: usize = 8;

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file: {}", path.display())]
    MissingFile { path: PathBuf },
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {} at line {line}, column `{column}`: {message}", path.display())]
    Schema {
        path: PathBuf,
        line: usize,
        column: String,
        message: String,
    },
    #[error("invalid record `{id}`: field `{field}` {message}")]
    InvariantViolation {
        id: String,
        field: String,
        message: String,
    },
    #[error("need at least 2 records to split, got {0}")]
    TooFewRecords(usize),
    #[error("test fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CuttingMode {
    UpMilling,
    DownMilling,
}

impl CuttingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CuttingMode::UpMilling => "up",
            CuttingMode::DownMilling => "down",
        }
    }

    /// 0 for up milling, 1 for down milling.
    pub fn flag(self) -> f64 {
        match self {
            CuttingMode::UpMilling => 0.0,
            CuttingMode::DownMilling => 1.0,
        }
    }
}

impl fmt::Display for CuttingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CuttingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "up" => Ok(CuttingMode::UpMilling),
            "down" => Ok(CuttingMode::DownMilling),
            other => Err(format!("expected `up` or `down`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    /// Feed per tool rotation, mm.
    pub feed_f: f64,
    /// Spindle speed, rpm.
    pub spindle_n: f64,
    /// Cutting speed, m/min.
    pub cutting_speed_vc: f64,
    /// Depth of cut, mm.
    pub depth_ap: f64,
    pub mode: CuttingMode,
}

impl ProcessParams {
    fn validate(&self, id: &str) -> Result<(), DataError> {
        for (field, v) in [
            ("feed_f", self.feed_f),
            ("spindle_n", self.spindle_n),
            ("cutting_speed_vc", self.cutting_speed_vc),
            ("depth_ap", self.depth_ap),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(violation(id, field, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Raw force channels of one run. Lengths may differ between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSignals {
    /// Active force, N.
    pub fa: Vec<f64>,
    /// Normal force, N.
    pub fz: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl ForceSignals {
    fn validate(&self, id: &str) -> Result<(), DataError> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(violation(
                id,
                "sample_rate_hz",
                format!("must be finite and > 0, got {}", self.sample_rate_hz),
            ));
        }
        for (field, series) in [("fa", &self.fa), ("fz", &self.fz)] {
            if series.len() < MIN_SIGNAL_LEN {
                return Err(violation(
                    id,
                    field,
                    format!("needs at least {MIN_SIGNAL_LEN} samples, got {}", series.len()),
                ));
            }
            if let Some(pos) = series.iter().position(|v| !v.is_finite()) {
                return Err(violation(id, field, format!("sample {pos} is not finite")));
            }
        }
        Ok(())
    }
}

/// Named roughness targets of one run (µm; Rdq and Rku are dimensionless).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoughnessTargets(BTreeMap<String, f64>);

impl RoughnessTargets {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    fn validate(&self, id: &str) -> Result<(), DataError> {
        for (name, v) in self.iter() {
            if !v.is_finite() {
                return Err(violation(id, name, format!("must be finite, got {v}")));
            }
            if is_nonnegative_target(name) && v < 0.0 {
                return Err(violation(id, name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Amplitude parameters (Ra, Rq, Rz, Rt) and kurtosis cannot be negative.
fn is_nonnegative_target(name: &str) -> bool {
    ["Ra", "Rq", "Rz", "Rt", "Rku"].iter().any(|p| name.starts_with(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub params: ProcessParams,
    pub signals: ForceSignals,
    pub targets: RoughnessTargets,
}

impl ExperimentRecord {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.id.is_empty() || self.id.contains([',', '/', '\\']) {
            return Err(violation(&self.id, "id", "must be non-empty without `,`, `/` or `\\`".into()));
        }
        self.params.validate(&self.id)?;
        self.signals.validate(&self.id)?;
        self.targets.validate(&self.id)
    }
}

fn violation(id: &str, field: &str, message: String) -> DataError {
    DataError::InvariantViolation {
        id: id.to_string(),
        field: field.to_string(),
        message,
    }
}

/// Validated, id-sorted collection of experiment records. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<ExperimentRecord>,
}

impl Dataset {
    /// Validates every record, rejects duplicate ids and sorts by id.
    pub fn new(mut records: Vec<ExperimentRecord>) -> Result<Self, DataError> {
        for rec in &records {
            rec.validate()?;
        }
        records.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in records.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(violation(&pair[0].id, "id", "is not unique".into()));
            }
        }
        Ok(Dataset { records })
    }

    pub fn records(&self) -> &[ExperimentRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    /// Target names present in every record.
    pub fn target_names(&self) -> BTreeSet<String> {
        let mut iter = self.records.iter();
        let Some(first) = iter.next() else {
            return BTreeSet::new();
        };
        let mut names: BTreeSet<String> = first.targets.names().map(str::to_string).collect();
        for rec in iter {
            names.retain(|n| rec.targets.get(n).is_some());
        }
        names
    }

    /// Values of `target` in record order, or `None` if any record lacks it.
    pub fn target_values(&self, target: &str) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.targets.get(target)).collect()
    }

    fn subset(&self, mut idx: Vec<usize>) -> Dataset {
        idx.sort_unstable();
        Dataset {
            records: idx.into_iter().map(|i| self.records[i].clone()).collect(),
        }
    }
}

/// Seeded holdout split. Returns `(train, test)`, each still sorted by id.
///
/// The test set holds `round(test_fraction * n)` records clamped to `[1, n - 1]`.
pub fn split_train_test(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let n = ds.len();
    if n < 2 {
        return Err(DataError::TooFewRecords(n));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidFraction(test_fraction));
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let test = order[..n_test].to_vec();
    let train = order[n_test..].to_vec();
    Ok((ds.subset(train), ds.subset(test)))
}

pub fn signal_path(signals_dir: &Path, id: &str, channel: &str) -> PathBuf {
    signals_dir.join(format!("{id}_{channel}.csv"))
}

fn read_to_string(path: &Path) -> Result<String, DataError> {
    if !path.is_file() {
        return Err(DataError::MissingFile { path: path.to_path_buf() });
    }
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_f64(path: &Path, line: usize, column: &str, text: &str) -> Result<f64, DataError> {
    text.trim().parse::<f64>().map_err(|_| DataError::Schema {
        path: path.to_path_buf(),
        line,
        column: column.to_string(),
        message: format!("`{text}` is not a number"),
    })
}

/// Reads one force channel file; returns `(sample_rate_hz, samples)`.
pub fn read_signal_file(path: &Path) -> Result<(f64, Vec<f64>), DataError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let rate_text = header.strip_prefix("sample_rate_hz,").ok_or_else(|| DataError::Schema {
        path: path.to_path_buf(),
        line: 1,
        column: "sample_rate_hz".into(),
        message: format!("expected `sample_rate_hz,<value>` header, got `{header}`"),
    })?;
    let rate = parse_f64(path, 1, "sample_rate_hz", rate_text)?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        samples.push(parse_f64(path, i + 2, "sample", line)?);
    }
    Ok((rate, samples))
}

pub fn write_signal_file(path: &Path, sample_rate_hz: f64, samples: &[f64]) -> Result<(), DataError> {
    let mut out = String::with_capacity(samples.len() * 20 + 32);
    out.push_str(&format!("sample_rate_hz,{}\n", fmt_num(sample_rate_hz)));
    for s in samples {
        out.push_str(&fmt_num(*s));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)
}

/// Shortest decimal text that parses back to the same `f64` bit pattern.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

/// Loads `metadata_path` and the per-experiment signal files under `signals_dir`.
pub fn load_dataset(metadata_path: &Path, signals_dir: &Path) -> Result<Dataset, DataError> {
    let text = read_to_string(metadata_path)?;
    let schema_err = |line: usize, column: &str, message: String| DataError::Schema {
        path: metadata_path.to_path_buf(),
        line,
        column: column.to_string(),
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| schema_err(1, "header", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < METADATA_HEADER.len() || header[..METADATA_HEADER.len()] != METADATA_HEADER {
        return Err(schema_err(
            1,
            "header",
            format!("expected header to start with `{}`", METADATA_HEADER.join(",")),
        ));
    }
    let mut seen = BTreeSet::new();
    for name in &header {
        if !seen.insert(name.as_str()) {
            return Err(schema_err(1, name, "duplicate column".into()));
        }
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| schema_err(line, "row", e.to_string()))?;
        if row.len() != header.len() {
            return Err(schema_err(
                line,
                "row",
                format!("expected {} fields, got {}", header.len(), row.len()),
            ));
        }
        let num = |col: usize| -> Result<f64, DataError> { parse_f64(metadata_path, line, &header[col], &row[col]) };

        let id = row[0].to_string();
        let mode = row[5]
            .parse::<CuttingMode>()
            .map_err(|m| schema_err(line, "mode", m))?;
        let params = ProcessParams {
            feed_f: num(1)?,
            spindle_n: num(2)?,
            cutting_speed_vc: num(3)?,
            depth_ap: num(4)?,
            mode,
        };
        let mut targets = RoughnessTargets::new();
        for (col, name) in header.iter().enumerate().skip(6) {
            targets.insert(name.clone(), num(col)?);
        }

        let (rate_a, fa) = read_signal_file(&signal_path(signals_dir, &id, "fa"))?;
        let (rate_z, fz) = read_signal_file(&signal_path(signals_dir, &id, "fz"))?;
        if rate_a.to_bits() != rate_z.to_bits() {
            return Err(violation(
                &id,
                "sample_rate_hz",
                format!("differs between channels ({rate_a} vs {rate_z})"),
            ));
        }
        records.push(ExperimentRecord {
            id,
            params,
            signals: ForceSignals {
                fa,
                fz,
                sample_rate_hz: rate_a,
            },
            targets,
        });
    }
    Dataset::new(records)
}

/// Writes `ds` in the same formats [`load_dataset`] reads. Creates `signals_dir` if needed.
///
/// Standard target columns come first, extra targets follow in name order.
pub fn save_dataset(ds: &Dataset, metadata_path: &Path, signals_dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(signals_dir).map_err(|source| DataError::Io {
        path: signals_dir.to_path_buf(),
        source,
    })?;
    let extras: Vec<String> = ds
        .target_names()
        .into_iter()
        .filter(|n| !STANDARD_TARGETS.contains(&n.as_str()))
        .collect();

    let mut out = METADATA_HEADER.join(",");
    for e in &extras {
        out.push(',');
        out.push_str(e);
    }
    out.push('\n');
    for rec in ds.records() {
        let p = &rec.params;
        let mut fields = vec![
            rec.id.clone(),
            fmt_num(p.feed_f),
            fmt_num(p.spindle_n),
            fmt_num(p.cutting_speed_vc),
            fmt_num(p.depth_ap),
            p.mode.to_string(),
        ];
        for name in STANDARD_TARGETS.iter().copied().chain(extras.iter().map(String::as_str)) {
            let v = rec.targets.get(name).ok_or_else(|| violation(&rec.id, name, "is missing".into()))?;
            fields.push(fmt_num(v));
        }
        out.push_str(&fields.join(","));
        out.push('\n');

        let s = &rec.signals;
        write_signal_file(&signal_path(signals_dir, &rec.id, "fa"), s.sample_rate_hz, &s.fa)?;
        write_signal_file(&signal_path(signals_dir, &rec.id, "fz"), s.sample_rate_hz, &s.fz)?;
    }
    write_file(metadata_path, out.as_bytes())
}

/// Conventional layout: `<dir>/experiments.csv` plus `<dir>/signals/`.
pub fn dataset_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join("experiments.csv"), dir.join("signals"))
}

pub fn load_dataset_dir(dir: &Path) -> Result<Dataset, DataError> {
    let (meta, signals) = dataset_paths(dir);
    load_dataset(&meta, &signals)
}

pub fn save_dataset_dir(ds: &Dataset, dir: &Path) -> Result<(), DataError> {
    let (meta, signals) = dataset_paths(dir);
    save_dataset(ds, &meta, &signals)
}
