//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or data error, 3 internal invariant failure.
//! `MILLSENSE_THREADS` caps the worker pool; results do not depend on it.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::ablation::{run_ablation, AblationConfig, AblationError, DropSpec, DEFAULT_SUGGEST_THRESHOLD};
use crate::data::{load_dataset_dir, save_dataset_dir, split_train_test, DataError, DEFAULT_TEST_FRACTION};
use crate::explain::{
    gini_report, permutation_importance_with, subset_importance, ExplainError, PermutationOptions, Predicate,
    DEFAULT_REPEATS,
};
use crate::features::{features_to_csv, featurize_dataset, FeatureError};
use crate::forest::{fit, load_forest, save_forest, ForestError, HyperParams, PersistError};
use crate::metrics::{ErrorMetric, MetricError, RegressionScores};
use crate::synthgen::{generate, SynthConfig, SynthError};

pub const THREADS_ENV: &str = "MILLSENSE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Ablation(#[from] AblationError),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Ablation(AblationError::Invariant(_)) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "millsense", version, about = "Random-forest roughness prediction with feature importance and sensor ablation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Method {
    Gini,
    Perm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Rows {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Mse,
    Mae,
}

#[derive(Debug, clap::Args)]
pub struct ForestArgs {
    /// Number of trees.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 12)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 2)]
    pub min_samples_leaf: usize,
    /// Candidate features per split [default: ceil(p/3)].
    #[arg(long)]
    pub max_features: Option<usize>,
    /// Fraction of records held out for testing.
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    pub test_fraction: f64,
}

impl ForestArgs {
    fn hyper(&self, seed: u64) -> HyperParams {
        HyperParams {
            n_trees: self.trees,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.max_features,
            seed,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset described by a TOML config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a forest for one target and print its test metrics.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        /// Sensor group to drop (`Fa_`, `Fz_`); repeatable.
        #[arg(long, action = ArgAction::Append)]
        drop: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write the full feature matrix as CSV.
        #[arg(long)]
        dump_features: Option<PathBuf>,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Print a feature importance report for a saved model.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Gini)]
        method: Method,
        /// Row filter such as `f<=0.45` or `f<=0.45 && ap>1`.
        #[arg(long)]
        subset: Option<String>,
        /// Which split of the data to evaluate on (uses the model's split seed).
        #[arg(long, value_enum, default_value_t = Rows::All)]
        rows: Rows,
        #[arg(long, default_value_t = DEFAULT_REPEATS)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = MetricArg::Mse)]
        metric: MetricArg,
    },
    /// Compare test metrics with and without sensor groups.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated target names.
        #[arg(long, value_delimiter = ',', required = true)]
        targets: Vec<String>,
        /// Sensor group to drop (`Fa_`, `Fz_`, or `none`); repeatable.
        #[arg(long, action = ArgAction::Append, conflicts_with = "auto", required_unless_present = "auto")]
        drop: Vec<String>,
        /// Drop groups whose Gini importance is below the threshold for every target.
        #[arg(long)]
        auto: bool,
        #[arg(long, default_value_t = DEFAULT_SUGGEST_THRESHOLD)]
        auto_threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON report path; the CSV table goes next to it with a `.csv` extension.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        forest: ForestArgs,
    },
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn normalize_drops(drop: &[String]) -> Vec<String> {
    drop.iter().filter(|d| d.as_str() != "none").cloned().collect()
}

fn cmd_generate(config: &Path, out: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(config)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", config.display())))?;
    let cfg = SynthConfig::from_toml(&text)?;
    let ds = generate(&cfg)?;
    save_dataset_dir(&ds, out)?;
    let _ = writeln!(stdout, "generated={} out={}", ds.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    data: &Path,
    target: &str,
    drop: &[String],
    seed: u64,
    out: &Path,
    dump_features: Option<&Path>,
    forest: &ForestArgs,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let ds = load_dataset_dir(data)?;
    if !ds.target_names().contains(target) {
        return Err(CliError::Usage(format!("unknown target `{target}`")));
    }
    let drop = normalize_drops(drop);
    if let Some(path) = dump_features {
        let (x, names) = featurize_dataset::<&str>(&ds, &[])?;
        write(path, &features_to_csv(&x, &names))?;
    }
    let (train, test) = split_train_test(&ds, forest.test_fraction, seed)?;
    let (x_train, names) = featurize_dataset(&train, &drop)?;
    let (x_test, _) = featurize_dataset(&test, &drop)?;
    let y_train = train.target_values(target).expect("target checked above");
    let y_test = test.target_values(target).expect("target checked above");

    let mut model = fit(&x_train, &y_train, names, &forest.hyper(seed))?;
    model.meta.target = Some(target.to_string());
    model.meta.split_seed = Some(seed);
    model.meta.test_fraction = Some(forest.test_fraction);
    model.meta.dropped_groups = drop;
    let scores = RegressionScores::compute(&y_test, &model.predict_rows(&x_test)?)?;
    save_forest(&model, out)?;

    let _ = writeln!(stdout, "features={}", model.n_features());
    let _ = writeln!(
        stdout,
        "target={target} mse={:?} mae={:?} mape={:?}%",
        scores.mse, scores.mae, scores.mape
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_explain(
    model_path: &Path,
    data: &Path,
    method: Method,
    subset: Option<&str>,
    rows: Rows,
    repeats: usize,
    seed: u64,
    metric: MetricArg,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let model = load_forest(model_path)?;
    let report = match method {
        Method::Gini => {
            if subset.is_some() {
                return Err(CliError::Usage("--subset applies to --method perm only".into()));
            }
            gini_report(&model)
        }
        Method::Perm => {
            let target = model
                .meta
                .target
                .clone()
                .ok_or_else(|| CliError::Usage("model file does not record its target".into()))?;
            let ds = load_dataset_dir(data)?;
            let ds = match rows {
                Rows::All => ds,
                Rows::Train | Rows::Test => {
                    let fraction = model.meta.test_fraction.unwrap_or(DEFAULT_TEST_FRACTION);
                    let split_seed = model.meta.split_seed.unwrap_or(0);
                    let (train, test) = split_train_test(&ds, fraction, split_seed)?;
                    if matches!(rows, Rows::Train) {
                        train
                    } else {
                        test
                    }
                }
            };
            let y = ds
                .target_values(&target)
                .ok_or_else(|| CliError::Usage(format!("unknown target `{target}`")))?;
            let (x_all, all_names) = featurize_dataset::<&str>(&ds, &[])?;
            let cols: Vec<usize> = model
                .feature_names
                .iter()
                .map(|n| {
                    all_names
                        .iter()
                        .position(|a| a == n)
                        .ok_or_else(|| CliError::Usage(format!("model feature `{n}` is not produced by the featurizer")))
                })
                .collect::<Result<_, _>>()?;
            let x = x_all.select_columns(&cols);
            let opts = PermutationOptions {
                repeats,
                seed,
                metric: match metric {
                    MetricArg::Mse => ErrorMetric::Mse,
                    MetricArg::Mae => ErrorMetric::Mae,
                },
            };
            let rows_label = match rows {
                Rows::All => "all",
                Rows::Train => "train",
                Rows::Test => "test",
            };
            match subset {
                Some(text) => {
                    let predicate: Predicate = text.parse()?;
                    let mut report = subset_importance(&model, &x, &y, &predicate, &opts)?;
                    if !matches!(rows, Rows::All) {
                        report.subset_label = format!("{rows_label}:{}", report.subset_label);
                    }
                    report
                }
                None => permutation_importance_with(&model, &x, &y, &opts, rows_label)?,
            }
        }
    };
    let _ = stdout.write_all(report.to_json().as_bytes());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ablate(
    data: &Path,
    targets: &[String],
    drop: &[String],
    auto: bool,
    auto_threshold: f64,
    seed: u64,
    out: &Path,
    forest: &ForestArgs,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let ds = load_dataset_dir(data)?;
    let cfg = AblationConfig {
        targets: targets.to_vec(),
        drop: if auto {
            DropSpec::Auto {
                threshold: auto_threshold,
            }
        } else {
            DropSpec::Manual(normalize_drops(drop))
        },
        hyper: forest.hyper(seed),
        split_seed: seed,
        test_fraction: forest.test_fraction,
    };
    let report = run_ablation(&ds, &cfg)?;
    write(out, &report.to_json())?;
    write(&out.with_extension("csv"), &report.to_csv())?;

    let _ = writeln!(stdout, "dropped={}", report.dropped_groups.join(","));
    for t in &report.targets {
        let _ = writeln!(
            stdout,
            "target={} baseline_mape={:?}% ablated_mape={:?}% delta_mape={:?}",
            t.target, t.baseline.mape, t.ablated.mape, t.delta_mape
        );
    }
    Ok(())
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate { config, out } => cmd_generate(config, out, stdout),
        Command::Train {
            data,
            target,
            drop,
            seed,
            out,
            dump_features,
            forest,
        } => cmd_train(data, target, drop, *seed, out, dump_features.as_deref(), forest, stdout),
        Command::Explain {
            model,
            data,
            method,
            subset,
            rows,
            repeats,
            seed,
            metric,
        } => cmd_explain(model, data, *method, subset.as_deref(), *rows, *repeats, *seed, *metric, stdout),
        Command::Ablate {
            data,
            targets,
            drop,
            auto,
            auto_threshold,
            seed,
            out,
            forest,
        } => cmd_ablate(data, targets, drop, *auto, *auto_threshold, *seed, out, forest, stdout),
    }
}

/// Worker count from `MILLSENSE_THREADS`; 0 lets rayon pick.
fn thread_count() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))),
        _ => Ok(0),
    }
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let color = if std::env::var_os("NO_COLOR").is_some() {
        clap::ColorChoice::Never
    } else {
        clap::ColorChoice::Auto
    };
    let matches = <Cli as clap::CommandFactory>::command()
        .color(color)
        .try_get_matches_from(args);
    let cli = match matches.and_then(|m| <Cli as clap::FromArgMatches>::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = thread_count().and_then(|threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
        pool.install(|| execute(&cli, &mut std::io::stdout().lock()))
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
