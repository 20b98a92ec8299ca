use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn geoaffine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoaffine"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn report_without_timestamp(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn list_prints_catalog() {
    let o = geoaffine(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["flat-linfty", "product-s2xr", "mainlemma-sphere", "negative-controls"] {
        assert!(text.contains(name), "{name}");
    }
}

#[test]
fn passing_scenario_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = geoaffine(&["run", "flat-linfty", "--out", out, "--seed", "7"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("flat-linfty: PASS"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("flat-linfty/report.json")).unwrap()).unwrap();
    assert_eq!(report["data"]["affinity"]["verdict"], "affine");
    assert!(dir.path().join("flat-linfty/differential.csv").is_file());
}

#[test]
fn negative_control_scenario_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = geoaffine(&["run", "sphere-sine-warp", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn failing_assertion_exits_one() {
    // The decay-factor assertion fails under the prescribed forward differences.
    let dir = tempfile::tempdir().unwrap();
    let o = geoaffine(&["run", "mainlemma-sphere", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("decay_factor"));
    assert!(dir.path().join("mainlemma-sphere/report.json").is_file());
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(geoaffine(&["run", "no-such-scenario", "--out", out]).status.code(), Some(2));
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"scenarios": {"flat-linfty": {"bogus": 1}}}"#).unwrap();
    let o = geoaffine(&["run", "flat-linfty", "--out", out, "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    assert_eq!(geoaffine(&["report", "--merge", dir.path().join("missing").to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn config_and_flags_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 11, "grid": 90, "scenarios": {"regular-corners": {"halvings": 5}}}"#).unwrap();
    let out = dir.path().join("out");
    let o = geoaffine(&[
        "run",
        "regular-corners",
        "--out",
        out.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--steps",
        "48",
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("regular-corners/report.json")).unwrap()).unwrap();
    assert_eq!(r["seeds"][0], 11);
    assert_eq!(r["grid"], 90);
    assert_eq!(r["steps"], 48);
    assert_eq!(r["params"]["halvings"], 5);
}

#[test]
fn merge_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(geoaffine(&["run", "regular-corners", "--out", out]).status.success());
    assert!(geoaffine(&["run", "negative-controls", "--out", out]).status.success());
    let o = geoaffine(&["report", "--merge", out]);
    assert!(o.status.success(), "{}", stdout(&o));
    let s: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["passed"], true);
    assert_eq!(s["scenarios"].as_array().unwrap().len(), 2);

    assert_eq!(geoaffine(&["run", "mainlemma-hyperbolic", "--out", out]).status.code(), Some(1));
    assert_eq!(geoaffine(&["report", "--merge", out]).status.code(), Some(1));
}

#[test]
fn repeated_runs_match_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = geoaffine(&["run", "negative-controls", "--out", d.path().to_str().unwrap(), "--seed", "7"]);
        assert!(o.status.success());
    }
    let rel = "negative-controls/report.json";
    assert_eq!(report_without_timestamp(&a.path().join(rel)), report_without_timestamp(&b.path().join(rel)));
}
