use std::fs;

use serde_json::json;

use super::*;

fn run(name: &str, opts: &RunOptions) -> (tempfile::TempDir, ScenarioReport) {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::builtin(name, opts).unwrap();
    let r = run_scenario(&s, dir.path()).unwrap();
    (dir, r)
}

#[test]
fn catalog_lists_required_scenarios() {
    let names: Vec<&str> = list_scenarios().iter().map(|c| c.name).collect();
    for want in [
        "flat-linfty",
        "sphere-transitive",
        "product-s2xr",
        "product-s2xs2",
        "sphere-homothety",
        "sphere-constant",
        "mainlemma-sphere",
        "mainlemma-hyperbolic",
        "regular-corners",
        "decomposition-r3-l1",
        "negative-controls",
        "sphere-sine-warp",
    ] {
        assert!(names.contains(&want), "{want}");
    }
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), names.len());
}

#[test]
fn every_builtin_builds_with_known_operations() {
    let opts = RunOptions::default();
    for c in list_scenarios() {
        let s = Scenario::builtin(c.name, &opts).unwrap();
        assert!(!s.suite.is_empty(), "{}", c.name);
        let geometric = ["geodesic-oracles", "sphere-transitive", "mainlemma-sphere", "mainlemma-hyperbolic"];
        assert_eq!(s.oracles.is_empty(), geometric.contains(&c.name), "{}", c.name);
        for e in &s.suite {
            assert!(OPERATIONS.contains(&e.operation), "{}: {}", c.name, e.operation);
        }
    }
}

#[test]
fn each_criterion_has_one_entry_per_scenario() {
    let opts = RunOptions::default();
    let mut seen = std::collections::BTreeSet::new();
    for c in list_scenarios() {
        let s = Scenario::builtin(c.name, &opts).unwrap();
        let mut here: Vec<u8> = s.suite.iter().filter_map(|e| e.criterion).collect();
        let n = here.len();
        here.dedup();
        assert_eq!(here.len(), n, "{} repeats a criterion", c.name);
        seen.extend(here);
    }
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), (1..=9).collect::<Vec<u8>>());
}

#[test]
fn unknown_names_are_rejected() {
    let err = Scenario::builtin("no-such-thing", &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::UnknownScenario(_)));
}

#[test]
fn config_overrides_are_checked() {
    let opts = RunOptions::from_json(r#"{"seed": 3, "scenarios": {"flat-linfty": {"n_geodesics": 25}}}"#).unwrap();
    assert_eq!(opts.seed, 3);
    let s = Scenario::builtin("flat-linfty", &opts).unwrap();
    assert_eq!(s.params.usize("n_geodesics").unwrap(), 25);
    assert_eq!(s.seeds[0], 3);

    let defaults = RunOptions::from_json("{}").unwrap();
    assert_eq!(defaults, RunOptions::default());

    for bad in [
        r#"{"scenarios": {"nope": {}}}"#,
        r#"{"colour": 1}"#,
        r#"{"seed": "x"}"#,
    ] {
        assert!(matches!(RunOptions::from_json(bad), Err(Error::Config(_))), "{bad}");
    }
    let wrong_key = RunOptions::from_json(r#"{"scenarios": {"flat-linfty": {"n_geo": 3}}}"#).unwrap();
    assert!(matches!(Scenario::builtin("flat-linfty", &wrong_key), Err(Error::Config(_))));
    let wrong_type = RunOptions::from_json(r#"{"scenarios": {"flat-linfty": {"n_geodesics": [1]}}}"#).unwrap();
    assert!(matches!(Scenario::builtin("flat-linfty", &wrong_type), Err(Error::Config(_))));
}

#[test]
fn steps_and_grid_reach_the_scenario() {
    let opts = RunOptions {
        steps: Some(32),
        grid: Some(64),
        ..RunOptions::default()
    };
    let s = Scenario::builtin("sphere-homothety", &opts).unwrap();
    assert_eq!(s.manifold.steps(), 32);
    assert_eq!(s.grid, 64);
    let too_few = RunOptions {
        steps: Some(4),
        ..RunOptions::default()
    };
    assert!(Scenario::builtin("sphere-homothety", &too_few).is_err());
}

#[test]
fn outcome_comparisons() {
    assert!(Outcome::at_most(1e-5, 1e-4).passed);
    assert!(!Outcome::at_most(f64::NAN, 1e-4).passed);
    assert!(!Outcome::at_least(f64::NAN, 0.0).passed);
    assert!(Outcome::at_least(2.0, 1.9).passed);
    assert!(Outcome::within(&[Some(2.0), Some(1.8)], 1.7, 2.3).passed);
    assert!(!Outcome::within(&[Some(2.0), None], 1.7, 2.3).passed);
    assert!(!Outcome::within(&[], 1.7, 2.3).passed);
    assert!(Outcome::equals(vec![2, 1], vec![2, 1]).passed);
    let all = Outcome::all(vec![("a", Outcome::at_most(1.0, 2.0)), ("b", Outcome::at_least(1.0, 2.0))]);
    assert!(!all.passed);
    assert_eq!(all.value["b"]["passed"], json!(false));
    assert_eq!(serde_json::to_value(Comparison::AtMost).unwrap(), json!("<="));
}

#[test]
fn validation_rejects_unknown_operations_and_duplicates() {
    let mut s = Scenario::builtin("regular-corners", &RunOptions::default()).unwrap();
    s.suite.push(SuiteEntry::new("extra", "frobnicate", None, |_| Ok(Outcome::at_most(0.0, 1.0))));
    assert!(s.validate().is_err());
    s.suite.pop();
    let dup = s.suite[0].clone();
    s.suite.push(dup);
    assert!(s.validate().is_err());
}

#[test]
fn failing_entries_are_reported_not_raised() {
    let mut s = Scenario::builtin("regular-corners", &RunOptions::default()).unwrap();
    s.suite.push(SuiteEntry::new("broken", "norm_distance", None, |_| Err(Error::Seminorm)));
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(&s, dir.path()).unwrap();
    assert!(!r.passed);
    assert_eq!(r.exit_code(), 1);
    let c = r.check("broken").unwrap();
    assert!(!c.passed && c.error.is_some());
    assert_eq!(r.failed().len(), 1);
}

#[test]
fn flat_linfty_report_and_files() {
    let (dir, r) = run("flat-linfty", &RunOptions::default());
    assert!(r.passed, "{:?}", r.failed());
    assert_eq!(r.exit_code(), 0);
    assert_eq!(r.data["affinity"]["verdict"], json!("affine"));
    let base = dir.path().join("flat-linfty");
    let on_disk = read_report(&base.join(REPORT_FILE)).unwrap();
    assert_eq!(on_disk, r);
    for f in &r.files {
        let text = fs::read_to_string(base.join(f)).unwrap();
        assert!(text.starts_with("x0,x1,value\n"), "{f}");
    }
}

#[test]
fn reports_repeat_modulo_timestamp() {
    let opts = RunOptions::default();
    let (a, _) = run("regular-corners", &opts);
    let (b, _) = run("regular-corners", &opts);
    let read = |d: &tempfile::TempDir| fs::read_to_string(d.path().join("regular-corners").join(REPORT_FILE)).unwrap();
    assert_eq!(without_timestamp(&read(&a)).unwrap(), without_timestamp(&read(&b)).unwrap());
    assert!(without_timestamp(&read(&a)).unwrap().get("timestamp").is_none());
}

#[test]
fn homothety_reports_constant_two() {
    let (_d, r) = run("sphere-homothety", &RunOptions::default());
    assert!(r.passed, "{:?}", r.failed());
    let a = r.data["homothety"]["constant"].as_f64().unwrap();
    assert!((a - 2.0).abs() <= 1e-4);
}

#[test]
fn sine_warp_control_exits_zero() {
    let (_d, r) = run("sphere-sine-warp", &RunOptions::default());
    assert_eq!(r.exit_code(), 0);
    assert_eq!(r.data["affinity"]["verdict"], json!("not_affine"));
}

#[test]
fn mainlemma_report_carries_both_difference_schemes() {
    let (dir, r) = run("mainlemma-hyperbolic", &RunOptions::default());
    assert!(r.check("ratios_decrease").unwrap().passed);
    assert!(r.check("central_ratios").unwrap().passed);
    let rows = fs::read_to_string(dir.path().join("mainlemma-hyperbolic/ratios.csv")).unwrap();
    assert_eq!(rows.lines().next(), Some("r,dt,ratio,central_ratio"));
    assert_eq!(rows.lines().count(), 5);
}

#[test]
fn merge_builds_summary() {
    let dir = tempfile::tempdir().unwrap();
    let reports = run_many(&["regular-corners", "negative-controls"], &RunOptions::default(), dir.path()).unwrap();
    assert_eq!(reports[0].scenario, "regular-corners");
    let summary = merge_reports(dir.path()).unwrap();
    assert!(summary.passed);
    assert_eq!(summary.scenarios.len(), 2);
    assert_eq!(summary.scenarios[0].scenario, "negative-controls");
    let ks: Vec<u8> = summary.criteria.iter().map(|c| c.criterion).collect();
    assert_eq!(ks, vec![5, 6, 8]);
    assert!(dir.path().join(SUMMARY_FILE).is_file());

    let empty = tempfile::tempdir().unwrap();
    assert!(merge_reports(empty.path()).is_err());
}
