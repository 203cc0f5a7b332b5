use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geored_cli::{list_scenarios, run, run_all, CliError, Overrides, ScenarioConfig, Status};
use tempfile::tempdir;

fn geored(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geored"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(name: &str, out: &Path) -> ScenarioConfig {
    let mut c = ScenarioConfig::defaults(name).unwrap();
    c.output_dir = out.to_path_buf();
    c
}

#[test]
fn list_names_the_required_scenarios() {
    let names: Vec<&str> = list_scenarios().iter().map(|s| s.name).collect();
    for required in [
        "calogero-from-matrix",
        "dirac-two-particle-noncommuting-positions",
        "deformed-poincare-jacobi",
    ] {
        assert!(names.contains(&required), "{required} missing");
    }
    let out = geored(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let listed: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with(' '))
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    let mut sorted = listed.clone();
    sorted.sort_unstable();
    assert_eq!(listed, sorted);
    assert_eq!(listed.len(), names.len());
}

#[test]
fn unknown_scenario_is_rejected() {
    assert!(matches!(
        ScenarioConfig::defaults("no-such-thing"),
        Err(CliError::UnknownScenario(_))
    ));
    let out = geored(&["run", "--scenario", "no-such-thing"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scenario"));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    for dir in [&a, &b] {
        let out = geored(&[
            "run",
            "--scenario",
            "qriccati-n3",
            "--seed",
            "42",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
    for file in ["report.json", "coset.csv"] {
        let x = fs::read(a.path().join("qriccati-n3").join(file)).unwrap();
        let y = fs::read(b.path().join("qriccati-n3").join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
    let other = tempdir().unwrap();
    geored(&[
        "run",
        "--scenario",
        "qriccati-n3",
        "--seed",
        "43",
        "--out-dir",
        other.path().to_str().unwrap(),
    ]);
    let x = fs::read(a.path().join("qriccati-n3/report.json")).unwrap();
    let z = fs::read(other.path().join("qriccati-n3/report.json")).unwrap();
    assert_ne!(x, z);
}

#[test]
fn riccati_classical_passes_by_default() {
    let dir = tempdir().unwrap();
    let r = run(&config("riccati-classical", dir.path())).unwrap();
    assert_eq!(r.status, Status::Pass);
    assert!(r.metrics["max_dev"] < 1e-8);
    let json: serde_json::Value = serde_json::from_slice(
        &fs::read(dir.path().join("riccati-classical/report.json")).unwrap(),
    )
    .unwrap();
    let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
    assert_eq!(
        keys,
        ["artifacts", "config_echo", "metrics", "name", "status"]
    );
    assert_eq!(json["status"], "PASS");
    for a in json["artifacts"].as_array().unwrap() {
        assert!(dir
            .path()
            .join("riccati-classical")
            .join(a.as_str().unwrap())
            .is_file());
    }
}

#[test]
fn tightened_tolerance_fails() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("riccati-classical.json");
    fs::write(&cfg, r#"{"tolerances": {"max_dev": 1e-14}}"#).unwrap();
    let out = geored(&[
        "run",
        "--scenario",
        "riccati-classical",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"params": {"boosts": 2.5}}"#).unwrap();
    let out = geored(&[
        "run",
        "--scenario",
        "dirac-wlc",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("params.boosts"), "{err}");
}

#[test]
fn run_all_summarizes_and_honours_config_dir() {
    let out = tempdir().unwrap();
    let empty = tempdir().unwrap();
    let over = Overrides {
        out_dir: Some(out.path().to_path_buf()),
        ..Default::default()
    };
    let defaults = run_all(Some(empty.path()), &over).unwrap();
    assert_eq!(defaults.fail, 0);
    assert_eq!(defaults.pass + defaults.partial, list_scenarios().len());
    // The only non-PASS defaults are comparisons against published closed forms.
    assert_eq!(defaults.partial, 2);
    assert_eq!(defaults.scenarios["radial-time-dependent"], Status::Partial);
    assert_eq!(
        defaults.scenarios["dirac-bracket-consistency"],
        Status::Partial
    );
    assert!(out.path().join("summary.json").is_file());

    let tight = tempdir().unwrap();
    // Default 1e-8 tightened by a factor of 10^6.
    fs::write(
        tight.path().join("riccati-classical.json"),
        r#"{"tolerances": {"max_dev": 1e-14}}"#,
    )
    .unwrap();
    let tightened = run_all(Some(tight.path()), &over).unwrap();
    assert!(tightened.fail >= 1);
    assert_eq!(tightened.scenarios["riccati-classical"], Status::Fail);
}
