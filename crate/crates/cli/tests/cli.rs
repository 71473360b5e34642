use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use superlab_core::ModelFile;
use tempfile::TempDir;

fn superlab() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_superlab"));
    cmd.env_remove("SUPERLAB_OUTPUT_DIR");
    cmd
}

fn write_spec(dir: &Path, name: &str, spec: Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    p
}

fn run_spec(spec: &Path) -> i32 {
    superlab().arg("run").arg(spec).status().unwrap().code().unwrap()
}

fn preset(dir: &Path, name: &str) {
    let st = superlab().args(["preset", name, "--dir"]).arg(dir).status().unwrap();
    assert!(st.success());
}

#[test]
fn delay_equation_spec_passes() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(
        dir.path(),
        "d.json",
        json!({"kind": "delay-eq", "parameters": {"a": 1.5, "thetaMax": 10.0, "step": 0.01, "maxSupError": 1e-8}, "outputDir": "out"}),
    );
    assert_eq!(run_spec(&spec), 0);
    let csv = std::fs::read_to_string(dir.path().join("out/delay-eq.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "theta,G_solved,G_closed,abs_error"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 1001);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], json!(true));
    assert_eq!(manifest["toolVersion"], json!(env!("CARGO_PKG_VERSION")));
    assert!(manifest["wallTimeSeconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn tolerance_violation_exits_one() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(
        dir.path(),
        "d.json",
        json!({"kind": "delay-eq", "parameters": {"a": 1.5, "thetaMax": 1.0, "step": 0.1, "maxSupError": 0.0}, "outputDir": "out"}),
    );
    assert_eq!(run_spec(&spec), 1);
}

#[test]
fn schema_violations_exit_two() {
    let dir = TempDir::new().unwrap();
    let bad_kind = write_spec(dir.path(), "a.json", json!({"kind": "teleport"}));
    assert_eq!(run_spec(&bad_kind), 2);
    let missing_model = write_spec(dir.path(), "b.json", json!({"kind": "calibrate", "modelPath": "nope.json"}));
    assert_eq!(run_spec(&missing_model), 2);
    let unknown_param = write_spec(
        dir.path(),
        "c.json",
        json!({"kind": "delay-eq", "parameters": {"a": 1.5, "thetaMax": 1.0, "step": 0.1, "colour": 3}}),
    );
    assert_eq!(run_spec(&unknown_param), 2);
    let out_of_range = write_spec(dir.path(), "d.json", json!({"kind": "delay-eq", "parameters": {"a": 2.5, "thetaMax": 1.0, "step": 0.1}}));
    assert_eq!(run_spec(&out_of_range), 2);
    assert_eq!(run_spec(&dir.path().join("absent.json")), 2);
    let st = superlab().args(["preset", "four-site"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn runtime_failure_exits_three() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let spec = write_spec(
        dir.path(),
        "d.json",
        json!({"kind": "delay-eq", "parameters": {"a": 1.5, "thetaMax": 1.0, "step": 0.1}, "outputDir": "blocker/out"}),
    );
    assert_eq!(run_spec(&spec), 3);
}

#[test]
fn calibrate_is_idempotent_and_round_trips() {
    let dir = TempDir::new().unwrap();
    preset(dir.path(), "three-site-mixed");
    let spec = write_spec(
        dir.path(),
        "cal.json",
        json!({"kind": "calibrate", "modelPath": "model.json", "parameters": {"lambdaTol": 1e-12, "maxBetaShift": 1e-12}, "outputDir": "cal"}),
    );
    assert_eq!(run_spec(&spec), 0);
    let original = ModelFile::from_json(&std::fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    let written = ModelFile::from_json(&std::fs::read_to_string(dir.path().join("cal/calibrated-model.json")).unwrap()).unwrap();
    for (a, b) in original.beta.iter().zip(&written.beta) {
        assert!((a - b).abs() <= 1e-12);
    }
    // the written file reloads to exactly the model it describes
    assert_eq!(ModelFile::from_model(&written.to_model().unwrap()), written);
}

#[test]
fn preset_bundles_are_complete() {
    let dir = TempDir::new().unwrap();
    preset(dir.path(), "two-site");
    let model = ModelFile::from_json(&std::fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    let s = 0.5f64.sqrt();
    assert!(model.phi.unwrap().iter().all(|p| (p - s).abs() < 1e-14));
    assert!(model.lambda.unwrap().abs() < 1e-12);
    for name in ["calibrate", "rv-fit", "yaglom", "simulate", "spine-check"] {
        assert!(dir.path().join(format!("{name}.json")).exists(), "{name}");
    }
    let three = TempDir::new().unwrap();
    preset(three.path(), "three-site-mixed");
    let model = ModelFile::from_json(&std::fs::read_to_string(three.path().join("model.json")).unwrap()).unwrap();
    assert!((model.gamma0.unwrap() - 1.3).abs() < 1e-15 && model.c_x.unwrap() > 0.0);
    let scalar = TempDir::new().unwrap();
    preset(scalar.path(), "scalar-csbp");
    for name in ["rv-fit", "yaglom", "delay-eq-1.5"] {
        assert!(scalar.path().join(format!("{name}.json")).exists(), "{name}");
    }
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    preset(dir.path(), "two-site");
    std::fs::write(dir.path().join("mu.json"), "[0.5, 0.5]").unwrap();
    std::fs::write(dir.path().join("f.json"), "[1.0, 2.0]").unwrap();
    let mut outputs = Vec::new();
    for run in ["r1", "r2"] {
        let out = dir.path().join(run);
        let st = superlab()
            .args(["--threads", "2", "simulate", "--paths", "2000", "--step", "0.01", "--horizon", "0.5", "--seed", "7"])
            .arg("--model")
            .arg(dir.path().join("model.json"))
            .arg("--mu")
            .arg(dir.path().join("mu.json"))
            .arg("--f")
            .arg(dir.path().join("f.json"))
            .env("SUPERLAB_OUTPUT_DIR", &out)
            .status()
            .unwrap();
        assert!(st.success());
        outputs.push(std::fs::read(out.join("functionals.csv")).unwrap());
        let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("simulate.json")).unwrap()).unwrap();
        assert!(report["survivors"].as_u64().unwrap() > 0);
        assert!(report["functionals_csv_path"].as_str().unwrap().ends_with("functionals.csv"));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn spine_check_reports_every_site() {
    let dir = TempDir::new().unwrap();
    preset(dir.path(), "two-site");
    std::fs::write(dir.path().join("f.json"), "[1.0, 1.0]").unwrap();
    let out = dir.path().join("out");
    let st = superlab()
        .args(["spine-check", "--theta", "1", "--horizon", "1", "--paths", "4000", "--seed", "3"])
        .arg("--model")
        .arg(dir.path().join("model.json"))
        .arg("--f")
        .arg(dir.path().join("f.json"))
        .arg("--output-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let rows: Value = serde_json::from_str(&std::fs::read_to_string(out.join("spine-check.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        for key in ["site", "fk_estimate", "fk_se", "ode_value", "z_score"] {
            assert!(r.get(key).is_some(), "{key}");
        }
    }
}

#[test]
fn table_kinds_write_csv() {
    let dir = TempDir::new().unwrap();
    preset(dir.path(), "scalar-csbp");
    let spec = write_spec(
        dir.path(),
        "c.json",
        json!({"kind": "cumulant", "modelPath": "model.json", "parameters": {"f": [1.0], "times": [0.0, 1.0, 2.0], "theta": 2.0}, "outputDir": "cum"}),
    );
    assert_eq!(run_spec(&spec), 0);
    let csv = std::fs::read_to_string(dir.path().join("cum/cumulant.csv")).unwrap();
    assert!(csv.starts_with("# model_hash: "));
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    // V_t(2) = (2^{-1/2} + t/2)^{-2}
    let exact = (0.5f64.sqrt() + 1.0).powi(-2);
    assert!((last[2] - exact).abs() < 1e-9 * exact);
    assert_eq!(run_spec(&dir.path().join("yaglom.json")), 0);
    assert_eq!(run_spec(&dir.path().join("survival.json")), 0);
}
