use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use millsense::explain::ImportanceReport;
use serde_json::Value;

fn millsense(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_millsense"))
        .args(args)
        .current_dir(cwd)
        .env("NO_COLOR", "1")
        .output()
        .expect("spawn millsense")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), stderr(&out));
    stdout(&out)
}

/// Temp dir holding a generated dataset in `data/`.
fn with_data(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("gen.toml"), config).unwrap();
    ok(millsense(dir.path(), &["generate", "--config", "gen.toml", "--out", "data"]));
    dir
}

const SMALL: &str = "n_experiments = 60\nseed = 3\n";
const PURE_NOISE: &str = "n_experiments = 500\nseed = 0\nirrelevant_sensor_mode = \"pure_noise\"\n";

#[test]
fn generate_writes_dataset_layout() {
    let dir = with_data(SMALL);
    let meta = fs::read_to_string(dir.path().join("data/experiments.csv")).unwrap();
    let mut lines = meta.lines();
    assert_eq!(
        lines.next().unwrap(),
        "id,f_mm_per_rot,n_rpm,vc_m_per_min,ap_mm,mode,Ramean,Rzmean,Rkumean,Rp1maxmean,Rdqmaxmean"
    );
    assert_eq!(lines.count(), 60);
    let signals = fs::read_dir(dir.path().join("data/signals")).unwrap().count();
    assert_eq!(signals, 120);
}

#[test]
fn generate_is_reproducible() {
    let a = with_data(SMALL);
    let b = with_data(SMALL);
    for f in ["data/experiments.csv", "data/signals/exp0007_fa.csv", "data/signals/exp0042_fz.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "n_experiments = 50\nnoise_sd = \"loud\"\n").unwrap();
    let out = millsense(dir.path(), &["generate", "--config", "bad.toml", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("noise_sd"), "{}", stderr(&out));

    fs::write(dir.path().join("bad.toml"), "n_experiments = 50\n[param_ranges]\nf = [0.5, 0.2]\n").unwrap();
    let out = millsense(dir.path(), &["generate", "--config", "bad.toml", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("param_ranges.f"), "{}", stderr(&out));

    fs::write(dir.path().join("bad.toml"), "n_experiments = 50\nvolume = 11\n").unwrap();
    let out = millsense(dir.path(), &["generate", "--config", "bad.toml", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("volume"), "{}", stderr(&out));
}

#[test]
fn train_prints_metrics_and_saves_model() {
    let dir = with_data(SMALL);
    let text = ok(millsense(
        dir.path(),
        &["train", "--data", "data", "--target", "Ramean", "--trees", "20", "--out", "m.json"],
    ));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "features=25");
    assert!(lines[1].starts_with("target=Ramean mse="), "{}", lines[1]);
    assert!(lines[1].contains(" mae=") && lines[1].ends_with('%'), "{}", lines[1]);
    let model: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(model["format"], "millsense-forest");
    assert_eq!(model["version"], 1);
}

#[test]
fn train_with_sensor_groups_dropped_keeps_configuration_only() {
    let dir = with_data(SMALL);
    let text = ok(millsense(
        dir.path(),
        &[
            "train", "--data", "data", "--target", "Rzmean", "--drop", "Fa_", "--drop", "Fz_", "--trees", "10",
            "--out", "m.json",
        ],
    ));
    assert_eq!(text.lines().next(), Some("features=5"));
}

#[test]
fn train_unknown_target_exits_2() {
    let dir = with_data(SMALL);
    let out = millsense(dir.path(), &["train", "--data", "data", "--target", "Rbogus", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown target"), "{}", stderr(&out));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn train_unknown_group_exits_2() {
    let dir = with_data(SMALL);
    let out = millsense(
        dir.path(),
        &["train", "--data", "data", "--target", "Ramean", "--drop", "Fy_", "--out", "m.json"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = millsense(dir.path(), &["train", "--target", "Ramean", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = millsense(dir.path(), &["ablate", "--targets", "Ramean", "--drop", "Fz_", "--out", "a.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = millsense(dir.path(), &["train", "--data", "nowhere", "--target", "Ramean", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn explain_reports() {
    let dir = with_data(SMALL);
    ok(millsense(
        dir.path(),
        &["train", "--data", "data", "--target", "Ramean", "--trees", "20", "--out", "m.json"],
    ));

    let gini = ImportanceReport::from_json(&ok(millsense(
        dir.path(),
        &["explain", "--model", "m.json", "--data", "data", "--method", "gini"],
    )))
    .unwrap();
    assert!((gini.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(gini.ranking.len(), 25);

    let sub = ImportanceReport::from_json(&ok(millsense(
        dir.path(),
        &[
            "explain", "--model", "m.json", "--data", "data", "--method", "perm", "--subset", "f<=0.45",
            "--repeats", "3",
        ],
    )))
    .unwrap();
    assert_eq!(sub.subset_label, "f<=0.45");
    assert_eq!(sub.repeats, Some(3));

    let test_rows = ImportanceReport::from_json(&ok(millsense(
        dir.path(),
        &["explain", "--model", "m.json", "--data", "data", "--method", "perm", "--rows", "test"],
    )))
    .unwrap();
    assert_eq!(test_rows.subset_label, "test");

    let out = millsense(
        dir.path(),
        &["explain", "--model", "m.json", "--data", "data", "--method", "perm", "--subset", "f<=-1"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ablate_drop_none_gives_zero_deltas() {
    let dir = with_data(SMALL);
    let text = ok(millsense(
        dir.path(),
        &["ablate", "--data", "data", "--targets", "Ramean,Rdqmaxmean", "--drop", "none", "--trees", "10", "--out", "a.json"],
    ));
    assert!(text.starts_with("dropped=\n"), "{text}");
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(report["format"], "millsense-ablation");
    for t in report["targets"].as_array().unwrap() {
        assert_eq!(t["delta_mape"].as_f64(), Some(0.0));
    }
    let csv = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("target,metric,baseline,ablated,delta"));
}

#[test]
fn ablate_auto_suggests_fz_on_pure_noise() {
    let dir = with_data(PURE_NOISE);
    let text = ok(millsense(
        dir.path(),
        &["ablate", "--data", "data", "--targets", "Ramean", "--auto", "--out", "a.json"],
    ));
    let dropped = text.lines().next().unwrap();
    assert!(dropped.starts_with("dropped=") && dropped.contains("Fz_"), "{dropped}");
}

#[test]
fn ablate_unknown_target_exits_2() {
    let dir = with_data(SMALL);
    let out = millsense(
        dir.path(),
        &["ablate", "--data", "data", "--targets", "Ramean,Rnope", "--drop", "Fz_", "--out", "a.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Rnope"), "{}", stderr(&out));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = with_data(SMALL);
    let train = ["train", "--data", "data", "--target", "Rkumean", "--trees", "15", "--seed", "9"];
    let a = ok(millsense(dir.path(), &[&train[..], &["--out", "a.json"]].concat()));
    let b = ok(millsense(dir.path(), &[&train[..], &["--out", "b.json"]].concat()));
    assert_eq!(a, b);
    assert_eq!(fs::read(dir.path().join("a.json")).unwrap(), fs::read(dir.path().join("b.json")).unwrap());
}

#[test]
fn bad_thread_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_millsense"))
        .args(["generate", "--config", "x.toml", "--out", "d"])
        .current_dir(dir.path())
        .env("MILLSENSE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
