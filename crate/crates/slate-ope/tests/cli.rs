use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn slate_ope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slate-ope"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn simulate(dir: &Path) {
    simulate_sized(dir, "5", "3");
}

fn simulate_sized(dir: &Path, candidates: &str, slate_size: &str) {
    let out = slate_ope(
        dir,
        &[
            "simulate",
            "--out",
            "sim",
            "--contexts",
            "4",
            "--candidates",
            candidates,
            "--slate-size",
            slate_size,
            "-n",
            "400",
            "--seed",
            "5",
            "--logging",
            "uniform",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

fn estimate(dir: &Path, target: &str, estimators: &str) -> Output {
    slate_ope(
        dir,
        &[
            "estimate",
            "--logs",
            "sim/logs.jsonl",
            "--world",
            "sim/world.json",
            "--target",
            target,
            "--estimator",
            estimators,
        ],
    )
}

fn values(out: &Output) -> Vec<(String, f64)> {
    let json: Value = serde_json::from_slice(&out.stdout).expect("estimate prints JSON");
    json["estimates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            (
                e["estimator"].as_str().unwrap().to_owned(),
                e["value"].as_f64().unwrap(),
            )
        })
        .collect()
}

#[test]
fn simulate_writes_world_logs_and_config() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    for file in ["world.json", "logs.jsonl", "config.json"] {
        assert!(
            dir.path().join("sim").join(file).is_file(),
            "{file} missing"
        );
    }
    let logs = std::fs::read_to_string(dir.path().join("sim/logs.jsonl")).unwrap();
    assert_eq!(logs.lines().count(), 400);
    let config: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sim/config.json")).unwrap())
            .unwrap();
    assert_eq!(config["seed"], 5);
    assert_eq!(config["n"], 400);
}

#[test]
fn on_policy_estimates_match_the_online_mean() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let out = estimate(dir.path(), "uniform", "online,ips,nis,iips,rips");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let vals = values(&out);
    let online = vals[0].1;
    assert_eq!(vals[0].0, "online");
    for (name, v) in &vals[1..] {
        assert!((v - online).abs() < 1e-9, "{name}: {v} vs online {online}");
    }
}

#[test]
fn malformed_jsonl_reports_the_line_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let logs = std::fs::read_to_string(dir.path().join("sim/logs.jsonl")).unwrap();
    let mut broken: Vec<&str> = logs.lines().take(3).collect();
    broken.push("{\"context_id\": ");
    std::fs::write(dir.path().join("sim/logs.jsonl"), broken.join("\n")).unwrap();
    let out = estimate(dir.path(), "uniform", "rips");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("logs.jsonl:4"), "{}", stderr(&out));
}

#[test]
fn unknown_names_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let out = estimate(dir.path(), "uniform", "rips,bogus");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus"));
    let out = estimate(dir.path(), "nonsense", "rips");
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nonsense"));
}

#[test]
fn overlap_failure_names_the_estimator_and_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // 8! slates per context: 400 uniform logs almost surely miss the optimal one
    simulate_sized(dir.path(), "8", "8");
    let out = estimate(dir.path(), "optimal", "nis");
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("nis"), "{}", stderr(&out));
}

#[test]
fn grid_reads_a_config_file_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "contexts": 4,
        "candidates": 5,
        "slate_size": 3,
        "n": 300,
        "repeats": 2,
        "truth_mc_samples": 1000,
        "logging": ["uniform"],
        "targets": ["uniform", "softmax:1"],
        "estimators": ["ips", "rips"],
    });
    std::fs::write(dir.path().join("cfg.json"), config.to_string()).unwrap();
    let out = slate_ope(
        dir.path(),
        &[
            "grid",
            "--config",
            "cfg.json",
            "--repeats",
            "3",
            "--out",
            "g",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let written: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("g/config.json")).unwrap())
            .unwrap();
    assert_eq!(written["repeats"], 3);
    assert_eq!(written["n"], 300);
    let rows = std::fs::read_to_string(dir.path().join("g/rows.csv")).unwrap();
    // header + 1 logging x 2 targets x 2 estimators x 3 repeats
    assert_eq!(rows.lines().count(), 1 + 12);
    assert!(dir.path().join("g/summary.json").is_file());
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"repeatz": 3}"#).unwrap();
    let out = slate_ope(dir.path(), &["grid", "--config", "cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("repeatz"));
}

#[test]
fn version_is_printed() {
    let dir = tempfile::tempdir().unwrap();
    let out = slate_ope(dir.path(), &["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}
