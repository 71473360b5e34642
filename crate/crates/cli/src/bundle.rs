//! Ready-to-run spec bundles for the preset models.

use std::path::{Path, PathBuf};

use serde_json::json;
use superlab_core::{presets, ModelFile};

use crate::artifacts::write_json;
use crate::error::{CliError, CliResult};
use crate::spec::{ExperimentSpec, Kind};

pub const MODEL_FILE: &str = "model.json";

fn spec(kind: Kind, parameters: serde_json::Value, seed: Option<u64>, out: &str) -> ExperimentSpec {
    ExperimentSpec {
        kind,
        model_path: kind.needs_model().then(|| PathBuf::from(MODEL_FILE)),
        parameters,
        output_dir: Some(PathBuf::from("out").join(out)),
        seed,
    }
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Named specs of a preset bundle.
pub fn bundle_specs(name: &str) -> CliResult<Vec<(String, ExperimentSpec)>> {
    let calibrate = spec(Kind::Calibrate, json!({ "lambdaTol": 1e-12 }), None, "calibrate");
    let mut specs = vec![("calibrate".to_string(), calibrate)];
    match name {
        "scalar-csbp" => {
            specs.push((
                "rv-fit".into(),
                spec(
                    Kind::RvFit,
                    json!({ "tMin": 1e2, "tMax": 1e5, "points": 31, "targetSlope": -2.0, "maxRelError": 5e-7 }),
                    None,
                    "rv-fit",
                ),
            ));
            specs.push((
                "survival".into(),
                spec(
                    Kind::Survival,
                    json!({ "mu": [1.0], "times": [1.0, 10.0, 100.0], "requireMonotone": true }),
                    None,
                    "survival",
                ),
            ));
            specs.push((
                "yaglom".into(),
                spec(
                    Kind::Yaglom,
                    json!({ "f": [1.0], "thetas": [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0], "horizons": [1.0, 10.0, 100.0], "maxSupError": 1e-9 }),
                    None,
                    "yaglom",
                ),
            ));
            for (a, tol) in [(1.2, 1e-7), (1.5, 1e-8), (1.8, 1e-7)] {
                specs.push((
                    format!("delay-eq-{a}"),
                    spec(
                        Kind::DelayEq,
                        json!({ "a": a, "thetaMax": 10.0, "step": 0.01, "tol": 1e-10, "maxSupError": tol }),
                        None,
                        &format!("delay-eq-{a}"),
                    ),
                ));
            }
        }
        "two-site" => {
            specs.push((
                "rv-fit".into(),
                spec(Kind::RvFit, json!({ "tMin": 1e3, "tMax": 1e6, "points": 61, "maxRelError": 0.02 }), None, "rv-fit"),
            ));
            specs.push((
                "yaglom".into(),
                spec(
                    Kind::Yaglom,
                    json!({
                        "f": [1.0, 1.0],
                        "thetas": log_grid(0.1, 10.0, 41),
                        "horizons": [1e2, 1e3, 1e4],
                        "maxFinalSupError": 0.05,
                        "requireDecreasing": true
                    }),
                    None,
                    "yaglom",
                ),
            ));
            specs.push((
                "simulate".into(),
                spec(
                    Kind::Simulate,
                    json!({
                        "mu": [0.0, 0.01], "f": [1.0, 1.0], "step": 1e-3, "horizon": 1.0, "paths": 100000,
                        "levels": 3, "zMax": 3.0, "requireBiasShrink": true
                    }),
                    Some(2024),
                    "simulate",
                ),
            ));
            specs.push((
                "spine-check".into(),
                spec(
                    Kind::SpineCheck,
                    json!({ "f": [1.0, 1.0], "theta": 1.0, "horizon": 2.0, "paths": 100000, "zMax": 3.0 }),
                    Some(2024),
                    "spine-check",
                ),
            ));
        }
        "three-site-mixed" => {
            specs.push((
                "survival".into(),
                spec(
                    Kind::Survival,
                    json!({ "mu": [1.0, 1.0, 1.0], "times": [1e3, 1e4, 1e5], "maxFinalRelError": 0.05, "requireMonotone": true }),
                    None,
                    "survival",
                ),
            ));
            specs.push((
                "rv-fit".into(),
                spec(Kind::RvFit, json!({ "tMin": 1e3, "tMax": 1e6, "points": 61, "maxRelError": 0.02 }), None, "rv-fit"),
            ));
            specs.push((
                "mixture-check".into(),
                spec(
                    Kind::MixtureCheck,
                    json!({
                        "alpha": [1.2, 1.8], "rho": [1.0, 1.0], "times": [1e-2, 1e-4, 1e-6],
                        "expected": [1.0 + 1e-2f64.powf(0.6), 1.0 + 1e-4f64.powf(0.6), 1.0 + 1e-6f64.powf(0.6)],
                        "maxAbsError": 1e-9, "requireMonotone": true
                    }),
                    None,
                    "mixture-check",
                ),
            ));
        }
        other => return Err(CliError::Schema(format!("unknown preset `{other}`"))),
    }
    Ok(specs)
}

/// Write the calibrated preset model and its specs into `dir`; returns the spec paths.
pub fn write_bundle(name: &str, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let model = presets::by_name(name).map_err(|e| CliError::Schema(e.to_string()))?;
    let specs = bundle_specs(name)?;
    write_json(&dir.join(MODEL_FILE), &ModelFile::from_model(&model))?;
    let mut paths = Vec::new();
    for (file, s) in specs {
        let p = dir.join(format!("{file}.json"));
        write_json(&p, &s)?;
        paths.push(p);
    }
    Ok(paths)
}
