//! End-to-end tests of the `mrl` binary: exit codes, artifact shapes, and
//! output determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mrl_core::{generate_study, write_dataset, CsvSchema, Study, StudySpec};

fn mrl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mrl"))
}

fn run(args: &[&str]) -> Output {
    mrl().args(args).output().expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mrl-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn export_study_csv(study: Study, n: usize, seed: u64, path: &Path) {
    let spec = StudySpec::new(study, n, 0.0, seed).unwrap();
    let ds = generate_study(&spec).unwrap();
    let covs: Vec<String> = (1..=ds.p()).map(|k| format!("x{k}")).collect();
    let schema = CsvSchema {
        time: "time".into(),
        event: "event".into(),
        covariates: covs,
    };
    write_dataset(path, &ds, &schema).unwrap();
}

fn stderr_error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .find(|l| l.trim_start().starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON on stderr, got: {text}"));
    serde_json::from_str(line).expect("stderr line parses as JSON")
}

#[test]
fn missing_d_is_usage_error() {
    let out = run(&["fit", "--input", "/nonexistent.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_error_json(&out);
    assert_eq!(err["error"]["exit_code"], 2);
}

#[test]
fn zero_tolerance_is_config_error() {
    let dir = tmp_dir("tol");
    let csv = dir.join("data.csv");
    export_study_csv(Study::S2, 80, 5, &csv);
    let out = run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--d",
        "1",
        "--tolerance",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_error_json(&out);
    assert_eq!(err["error"]["kind"], "usage");
}

#[test]
fn unknown_study_is_usage_error() {
    let out = run(&["simulate", "--study", "S9", "--n", "100", "--reps", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_kernel_is_usage_error() {
    let out = run(&["simulate", "--study", "S1", "--kernel", "triangle"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn grid_subcommand_requires_grids() {
    let dir = tmp_dir("nogrid");
    let csv = dir.join("data.csv");
    export_study_csv(Study::S2, 80, 6, &csv);
    let out = run(&["mrl-grid", "--input", csv.to_str().unwrap(), "--d", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_writes_artifacts_with_all_free_coefficients() {
    let dir = tmp_dir("fit");
    let csv = dir.join("data.csv");
    export_study_csv(Study::S1, 200, 11, &csv);
    let out = run(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--d",
        "1",
        "--grid-t",
        "0,0.5",
        "--grid-v",
        "-0.5,0.5",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    // A hard failure is unacceptable; a degraded (non-converged) fit still
    // writes artifacts.
    let code = out.status.code().unwrap();
    assert!(
        code == 0 || code == 3,
        "unexpected exit {code}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["beta_vecl"].as_array().unwrap().len(), 9);
    assert_eq!(fit["wald"].as_array().unwrap().len(), 9);
    assert_eq!(fit["beta_cov"].as_array().unwrap().len(), 9);
    assert_eq!(fit["config"]["d"], 1);
    assert!(fit["config"]["estimator"]["d_n"].is_number());

    let grid = std::fs::read_to_string(dir.join("grid.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next().unwrap(), "t,v1,m_hat,Lambda_hat,sigma_m_hat");
    assert_eq!(lines.count(), 4);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tmp_dir("cfg");
    let csv = dir.join("data.csv");
    export_study_csv(Study::S2, 120, 12, &csv);
    let cfg_path = dir.join("run.toml");
    std::fs::write(
        &cfg_path,
        format!(
            "input = \"{}\"\nd = 1\nh = 0.9\nb = 123.0\nseed = 4\n",
            csv.display()
        ),
    )
    .unwrap();
    let out = run(&[
        "fit",
        "--config",
        cfg_path.to_str().unwrap(),
        "--b",
        "2.0",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 3);
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("fit.json")).unwrap()).unwrap();
    // File supplied h; the flag overrode b.
    assert_eq!(fit["config"]["estimator"]["h"], 0.9);
    assert_eq!(fit["config"]["estimator"]["b"], 2.0);
    assert_eq!(fit["config"]["estimator"]["seed"], 4);
}

#[test]
fn simulate_smoke_run_is_deterministic() {
    let dir_a = tmp_dir("sim-a");
    let dir_b = tmp_dir("sim-b");
    let args = |dir: &Path| {
        vec![
            "simulate".to_string(),
            "--study".into(),
            "S2".into(),
            "--n".into(),
            "120".into(),
            "--censoring".into(),
            "0".into(),
            "--reps".into(),
            "10".into(),
            "--seed".into(),
            "7".into(),
            "--out-dir".into(),
            dir.to_str().unwrap().into(),
        ]
    };
    let out_a = mrl().args(args(&dir_a)).output().unwrap();
    let code = out_a.status.code().unwrap();
    assert!(
        code == 0 || code == 3,
        "unexpected exit {code}: {}",
        String::from_utf8_lossy(&out_a.stderr)
    );
    let out_b = mrl().args(args(&dir_b)).output().unwrap();
    assert_eq!(out_a.status.code(), out_b.status.code());

    let csv_a = std::fs::read(dir_a.join("report.csv")).unwrap();
    let csv_b = std::fs::read(dir_b.join("report.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "report CSV must be byte-identical");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir_a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["reps_requested"], 10);
    assert_eq!(report["report"]["bias"].as_array().unwrap().len(), 6);
    assert!(report["generated_at"].is_string());

    let header = String::from_utf8(csv_a)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, "metric,beta_2,beta_3,beta_4,beta_5,beta_6,beta_7");
}
