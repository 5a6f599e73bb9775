use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kslab"))
        .args(args)
        .env_remove("KSLAB_THREADS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn constant_table() {
    let out = kslab(&["constant", "--dim", "3..10"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let records: Vec<_> = rows.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), 8);
    assert_eq!(&records[0][0], "3");

    let out = kslab(&["constant", "--dim", "100"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(row[1].parse::<f64>().unwrap() < 1.013);
    assert!(row[3].parse::<f64>().unwrap() < 1.013);
}

#[test]
fn usage_errors() {
    assert_eq!(code(&kslab(&["constant", "--dim", "2"])), 2);
    assert_eq!(code(&kslab(&["solve", "--epsilon", "0.5"])), 2);
    assert_eq!(
        code(&kslab(&[
            "solve",
            "--dim",
            "3",
            "--epsilon",
            "0.5",
            "--format",
            "xml"
        ])),
        2
    );
    assert_eq!(code(&kslab(&["verify"])), 2);
    assert_eq!(code(&kslab(&["verify", "--check", "no-such-check"])), 2);
    let out = Command::new(env!("CARGO_BIN_EXE_kslab"))
        .args(["constant", "--dim", "3"])
        .env("KSLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn solve_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    let args = |out: &Path| {
        vec![
            "solve".to_string(),
            "--dim=3".into(),
            "--epsilon=0.5".into(),
            "--K=1".into(),
            "--t-end=1".into(),
            "--snapshots=0.25,0.5".into(),
            format!("--out={}", path(out)),
        ]
    };
    for out in [&a, &b] {
        let run = kslab(&args(out).iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    }
    let snap = |d: &Path| std::fs::read(d.join("snapshots.csv")).unwrap();
    assert_eq!(snap(&a), snap(&b));

    let m = manifest(&a);
    assert_eq!(m["subcommand"], "solve");
    assert_eq!(m["config"]["K"], 1.0);
    assert_eq!(m["config"]["nr"], 1024);
    assert_eq!(m["invariants"]["bound_violation"]["pass"], true);
    assert_eq!(m["outputs"][0], "snapshots.csv");

    // re-running from the manifest reproduces the data bitwise
    let manifest_path = a.join("manifest.json");
    let rerun = kslab(&["solve", "--config", path(&manifest_path), "--out", path(&c)]);
    assert_eq!(code(&rerun), 0);
    assert_eq!(snap(&a), snap(&c));
    assert_eq!(manifest(&c)["config"], m["config"]);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"dim": 3, "epsilon": 0.3, "nr": 128, "t_end": 0.1}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = kslab(&[
        "solve",
        "--config",
        path(&cfg),
        "--epsilon",
        "0.4",
        "--format",
        "json",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&run), 0);
    let m = manifest(&out);
    assert_eq!(m["config"]["epsilon"], 0.4);
    assert_eq!(m["config"]["nr"], 128);
    assert_eq!(m["config"]["format"], "json");
    assert!(out.join("snapshots.json").exists());
}

#[test]
fn supercritical_run_signals_blow_up() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let run = kslab(&[
        "solve",
        "--dim",
        "3",
        "--epsilon",
        "1.9",
        "--K",
        "4",
        "--t-end",
        "1",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&run), 4);
    let payload: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("blowup.json")).unwrap()).unwrap();
    assert_eq!(payload["diagnostic"]["signal"], "blow-up");
    assert!(out.join("manifest.json").exists());
}

#[test]
fn profile_both_reports_cross_distance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let run = kslab(&[
        "profile",
        "--dim",
        "3",
        "--epsilon",
        "0.5",
        "--method",
        "both",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stdout));
    let m = manifest(&out);
    assert!(m["invariants"]["cross_distance"]["value"].as_f64().unwrap() <= 1e-3);
    assert!(
        m["invariants"]["u0_min_estimator"]["value"]
            .as_f64()
            .unwrap()
            >= 0.5 - 1e-4
    );
    let diag: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap())
            .unwrap();
    assert!(!diag["trace"].as_array().unwrap().is_empty());
    assert!(out.join("profile_shoot.csv").exists() && out.join("profile_extract.csv").exists());
}

#[test]
fn profile_in_four_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let run = kslab(&[
        "profile",
        "--dim",
        "4",
        "--epsilon",
        "0.25",
        "--method",
        "shoot",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&run), 0);
    let diag: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap())
            .unwrap();
    assert!(diag["a_star"].as_f64().unwrap() >= 0.25);
}

#[test]
fn critical_profile_is_disclaimed() {
    let run = kslab(&["profile", "--epsilon", "1.0"]);
    assert!(String::from_utf8_lossy(&run.stderr).contains("critical"));
    assert_eq!(code(&run), 2);
}

#[test]
fn verify_single_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let run = kslab(&[
        "verify",
        "--check",
        "g-constancy",
        "--check",
        "prudnikov",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&run), 0);
    let m = manifest(&out);
    assert!(
        m["invariants"]["g-constancy.relative_spread"]["value"]
            .as_f64()
            .unwrap()
            <= 1e-6
    );
    assert_eq!(m["settings"]["g-constancy"]["y_star"], 1.0);
    let stdout = String::from_utf8(run.stdout).unwrap();
    let names: Vec<&str> = stdout
        .lines()
        .map(|l| {
            l.split_whitespace()
                .nth(1)
                .unwrap()
                .split('.')
                .next()
                .unwrap()
        })
        .collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
}

#[test]
fn verify_scaling() {
    let run = kslab(&["verify", "--check", "scaling", "--scale", "2"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn verify_fails_on_broken_invariant() {
    // profile checks need ε < 1
    let run = kslab(&["verify", "--check", "profile-limits", "--epsilon", "1.0"]);
    assert_ne!(code(&run), 0);
}

#[test]
fn sweep_classifies() {
    let run = kslab(&["sweep", "--dim", "3", "--epsilons", "0.3,1.2,2.5"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].contains("subcritical-exists"));
    assert!(lines[2].contains("indeterminate"));
    assert!(lines[3].contains("nonexistent"));
}

#[test]
fn barrier_curve() {
    let run = kslab(&["barrier", "--dim", "3", "--epsilon", "0.5", "--n", "20"]);
    assert_eq!(code(&run), 0);
    let text = String::from_utf8(run.stdout).unwrap();
    assert_eq!(text.lines().count(), 22);
    assert!(text.starts_with("r,m,m_normalized"));
}

#[test]
fn threads_can_be_capped() {
    let out = Command::new(env!("CARGO_BIN_EXE_kslab"))
        .args(["constant", "--dim", "3..6"])
        .env("KSLAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(out.stdout, kslab(&["constant", "--dim", "3..6"]).stdout);
}
