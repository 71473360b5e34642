//! Experiment spec files and the per-kind parameter blocks.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use superlab_core::SolverOptions;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Calibrate,
    Cumulant,
    Survival,
    Yaglom,
    Simulate,
    SpineCheck,
    RvFit,
    DelayEq,
    MixtureCheck,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Calibrate => "calibrate",
            Kind::Cumulant => "cumulant",
            Kind::Survival => "survival",
            Kind::Yaglom => "yaglom",
            Kind::Simulate => "simulate",
            Kind::SpineCheck => "spine-check",
            Kind::RvFit => "rv-fit",
            Kind::DelayEq => "delay-eq",
            Kind::MixtureCheck => "mixture-check",
        }
    }

    pub fn needs_model(self) -> bool {
        !matches!(self, Kind::DelayEq | Kind::MixtureCheck)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub parameters: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ExperimentSpec {
    /// Read a spec; relative paths inside it are resolved against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Schema(format!("cannot read spec {}: {e}", path.display())))?;
        let mut spec: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.model_path = spec.model_path.map(|p| base.join(p));
        spec.output_dir = spec.output_dir.map(|p| base.join(p));
        Ok(spec)
    }

    pub fn params<T: DeserializeOwned>(&self) -> CliResult<T> {
        let value = if self.parameters.is_null() { serde_json::json!({}) } else { self.parameters.clone() };
        serde_json::from_value(value).map_err(|e| CliError::Schema(format!("{} parameters: {e}", self.kind.name())))
    }
}

pub(crate) fn require(cond: bool, what: &str) -> CliResult<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Schema(what.to_string()))
    }
}

pub(crate) fn positive(x: f64, name: &str) -> CliResult<()> {
    require(x > 0.0 && x.is_finite(), &format!("`{name}` must be finite and > 0, got {x}"))
}

pub(crate) fn increasing(xs: &[f64], name: &str) -> CliResult<()> {
    require(!xs.is_empty(), &format!("`{name}` must not be empty"))?;
    require(
        xs.windows(2).all(|w| w[0] < w[1]) && xs.iter().all(|x| x.is_finite()),
        &format!("`{name}` must be finite and strictly increasing"),
    )
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CalibrateParams {
    /// Bound on `|lambda|` of the written model.
    pub lambda_tol: Option<f64>,
    /// Bound on the largest change of `beta` during calibration.
    pub max_beta_shift: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CumulantParams {
    pub f: Vec<f64>,
    pub times: Vec<f64>,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SurvivalParams {
    pub mu: Vec<f64>,
    pub times: Vec<f64>,
    /// Bound on `|ratio / target - 1|` at the last time.
    pub max_final_rel_error: Option<f64>,
    #[serde(default)]
    pub require_monotone: bool,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct YaglomParams {
    pub f: Vec<f64>,
    pub thetas: Vec<f64>,
    pub horizons: Vec<f64>,
    /// Rescale `f` so that `<f, phi*>_m = 1` before use.
    #[serde(default = "yes")]
    pub normalize: bool,
    /// Bound on the sup error at every horizon.
    pub max_sup_error: Option<f64>,
    /// Bound on the sup error at the last horizon.
    pub max_final_sup_error: Option<f64>,
    #[serde(default)]
    pub require_decreasing: bool,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimulateParams {
    pub mu: Vec<f64>,
    pub f: Vec<f64>,
    pub step: f64,
    pub horizon: f64,
    pub paths: usize,
    /// Coupled step levels `h, 2h, 4h, ...`; 1 means a plain run.
    #[serde(default = "one_level")]
    pub levels: usize,
    pub mass_floor: Option<f64>,
    /// When set, compare against the cumulant oracle: `|error| <= zMax SE + bias budget`.
    pub z_max: Option<f64>,
    #[serde(default)]
    pub require_bias_shrink: bool,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SpineCheckParams {
    pub f: Vec<f64>,
    pub theta: f64,
    pub horizon: f64,
    pub paths: usize,
    #[serde(default = "theta_nodes")]
    pub theta_nodes: usize,
    pub z_max: Option<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RvFitParams {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    /// Fit window; defaults to the top two decades of the grid.
    pub window: Option<(f64, f64)>,
    /// Expected slope; defaults to `-1 / (gamma_0 - 1)`.
    pub target_slope: Option<f64>,
    pub max_rel_error: Option<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DelayEqParams {
    pub a: f64,
    pub theta_max: f64,
    pub step: f64,
    #[serde(default = "delay_tol")]
    pub tol: f64,
    pub max_sup_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MixtureParams {
    pub alpha: Vec<f64>,
    pub rho: Vec<f64>,
    pub times: Vec<f64>,
    /// Reference ratios, one per time.
    pub expected: Option<Vec<f64>>,
    pub max_abs_error: Option<f64>,
    /// Require the ratio to decrease as `t` decreases.
    #[serde(default)]
    pub require_monotone: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn one_level() -> usize {
    1
}

fn theta_nodes() -> usize {
    superlab_core::spine::DEFAULT_THETA_NODES
}

fn delay_tol() -> f64 {
    1e-10
}
