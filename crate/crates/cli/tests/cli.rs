use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conjflow"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn without_wall_time(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"wall_time_seconds\""))
        .collect::<Vec<_>>()
        .join("\n")
}

const SPHERE: &str = r#"{
  "kind": "system",
  "system": {"family": "riemannian_constant_curvature", "n": 2, "interval": [0, 10], "kappa": 1}
}"#;

#[test]
fn sphere_scenario_reports_the_closed_form_instants() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scenarios().join("sphere.json"), dir.path(), &["--csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("sphere.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["passed"], true);
    let times: Vec<f64> = r["result"]["times"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_f64().unwrap())
        .collect();
    assert_eq!(times.len(), 3);
    for (k, t) in times.iter().enumerate() {
        assert!((t - (k + 1) as f64 * PI).abs() <= 1e-8, "{t}");
    }
    assert_eq!(r["result"]["multiplicities"], serde_json::json!([2, 2, 2]));
    assert!(r["quality"]["symplectic_drift"].as_f64().unwrap() <= 1e-8);
    assert!(r["wall_time_seconds"].as_f64().unwrap() >= 0.0);

    let branches = fs::read_to_string(dir.path().join("sphere.branches.csv")).unwrap();
    assert!(branches.starts_with("t,window,lambda_0,lambda_1\n"));
    let instants = fs::read_to_string(dir.path().join("sphere.instants.csv")).unwrap();
    assert_eq!(instants.lines().count(), 4);
    // no temporary files left behind
    assert!(fs::read_dir(dir.path())
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn roundtrip_scenario_matches() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scenarios().join("roundtrip.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("roundtrip.json"));
    assert_eq!(r["result"]["match"], true);
    assert_eq!(r["result"]["multiplicities"], serde_json::json!([1, 2]));
    assert_eq!(r["result"]["pipeline"]["early_instants"], 0);
}

#[test]
fn negative_step_is_a_schema_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SPHERE.replace(
        "\"kind\": \"system\",",
        "\"kind\": \"system\", \"grid\": {\"step\": -0.001},",
    );
    let path = write(dir.path(), "bad.json", &bad);
    for out in [
        run(&path, dir.path(), &[]),
        run(&scenarios().join("sphere.json"), dir.path(), &["--step", "-0.001"]),
        bin().arg("validate").arg(&path).output().unwrap(),
    ] {
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).contains("grid.step"));
    }
    assert!(!dir.path().join("system.json").exists());
}

#[test]
fn schema_errors_carry_field_paths() {
    let dir = tempfile::tempdir().unwrap();
    for (body, path) in [
        (SPHERE.replace("\"n\": 2", "\"n\": \"two\""), "system.n"),
        (
            SPHERE.replace("\"kappa\": 1", "\"kappa\": 1, \"c\": {\"kind\": \"zero\"}"),
            "system.c",
        ),
        (SPHERE.replace("[0, 10]", "[0, 10.0005]"), "grid.step"),
        (
            SPHERE.replace("riemannian_constant_curvature", "hyperbolic"),
            "system.family",
        ),
        ("{\"kind\": \"roundtrip\"}".to_string(), "prescription"),
        ("not json".to_string(), "scenario"),
    ] {
        let p = write(dir.path(), "s.json", &body);
        let out = bin().arg("validate").arg(&p).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{body}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(&format!("{path}:")), "{path}: {err}");
    }
    let missing = bin().arg("run").arg(dir.path().join("absent.json")).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_the_metric() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"kind": "system", "system": {"family": "riemannian", "n": 2, "interval": [0, 10],
        "c": {"kind": "scalar", "value": 25}}}"#;
    let out = run(&write(dir.path(), "h.json", body), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("symplectic drift"));

    // a failing check still leaves the report on disk
    let body = r#"{"kind": "roundtrip", "prescription": {"c": 0, "b": 1, "points": [{"t": 0.4, "multiplicity": 1}]},
        "roundtrip": {"match_tol": 1e-15}}"#;
    let out = run(&write(dir.path(), "r.json", body), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("match = false"));
    assert_eq!(report(&dir.path().join("roundtrip.json"))["passed"], false);
}

#[test]
fn catalog_is_stable() {
    let a = bin().arg("catalog").output().unwrap();
    let b = bin().arg("catalog").output().unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    for id in [
        "riemannian_constant_curvature",
        "prescription",
        "roundtrip",
        "truncation_family",
        "accumulation",
        "diagonal_profile",
    ] {
        assert!(text.contains(id), "{id}");
    }
}

#[test]
fn reports_are_deterministic_and_rerunnable() {
    let dir = tempfile::tempdir().unwrap();
    let body =
        r#"{"kind": "system", "name": "rand", "system": {"family": "random_positive", "n": 3, "interval": [0, 3]}}"#;
    let path = write(dir.path(), "rand.json", body);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        assert_eq!(run(&path, out, &["--seed", "11"]).status.code(), Some(0));
    }
    let ra = fs::read_to_string(a.join("rand.json")).unwrap();
    let rb = fs::read_to_string(b.join("rand.json")).unwrap();
    assert_eq!(without_wall_time(&ra), without_wall_time(&rb));

    // the echoed scenario carries the override and reproduces the run
    let echo = report(&a.join("rand.json"))["scenario"].clone();
    assert_eq!(echo["seed"], 11);
    let again = write(dir.path(), "echo.json", &echo.to_string());
    assert_eq!(run(&again, &c, &[]).status.code(), Some(0));
    let rc = fs::read_to_string(c.join("rand.json")).unwrap();
    assert_eq!(without_wall_time(&ra), without_wall_time(&rc));

    assert_eq!(run(&path, &c, &["--seed", "12"]).status.code(), Some(0));
    let rd = fs::read_to_string(c.join("rand.json")).unwrap();
    assert_ne!(
        report(&a.join("rand.json"))["result"],
        serde_json::from_str::<Value>(&rd).unwrap()["result"]
    );
}

#[test]
fn shipped_scenarios_validate() {
    for entry in fs::read_dir(scenarios()).unwrap() {
        let p = entry.unwrap().path();
        let out = bin().arg("validate").arg(&p).output().unwrap();
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}: {}",
            p.display(),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn morse_scenario_reports_a_stable_index() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"kind": "morse", "system": {"family": "riemannian_constant_curvature", "n": 2,
        "interval": [0, 8], "kappa": 1}, "morse": {"samples": 16, "t_end": 7.853981633974483}}"#;
    let out = run(&write(dir.path(), "m.json", body), dir.path(), &["--csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("morse.json"));
    // index at 2.5π on the unit sphere
    assert_eq!(r["result"]["index"], 4);
    assert_eq!(r["result"]["stable_index"]["stable"], true);
    let profile = fs::read_to_string(dir.path().join("morse.index.csv")).unwrap();
    assert_eq!(profile.lines().count(), 17);
}

#[test]
fn accumulation_and_prescription_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scenarios().join("accumulation.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("accumulation.json"));
    let g = r["result"]["gap_exponent"].as_f64().unwrap();
    assert!((g + 2.0).abs() <= 0.2, "{g}");

    let out = run(&scenarios().join("prescription.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("capped.json"));
    assert_eq!(r["result"]["match"], true);
    assert_eq!(r["result"]["multiplicities"].as_array().unwrap().last().unwrap(), 3);
}
