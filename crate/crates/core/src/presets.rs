//! Canonical models used by the acceptance suite and the CLI bundles.

use nalgebra::dmatrix;

use crate::error::{Error, Result};
use crate::model::{calibrate_critical, BranchingMechanism, CriticalModel, MotionGenerator, StateSpace};

pub const PRESET_NAMES: [&str; 3] = ["scalar-csbp", "two-site", "three-site-mixed"];

/// `d = 1`, `kappa = 1`, `gamma = 1.5`.
pub fn scalar_csbp() -> CriticalModel {
    let motion = MotionGenerator::new(StateSpace::counting(1).expect("one site"), dmatrix![0.0]).expect("valid motion");
    let mech = BranchingMechanism::new(vec![0.0], vec![1.0], vec![1.5]).expect("valid mechanism");
    calibrate_critical(&motion, &mech).expect("scalar preset calibrates")
}

/// Symmetric two-state motion with `gamma = (1.2, 1.8)`.
pub fn two_site() -> CriticalModel {
    let motion = MotionGenerator::new(StateSpace::counting(2).expect("two sites"), dmatrix![-1.0, 1.0; 1.0, -1.0])
        .expect("valid motion");
    let mech = BranchingMechanism::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.2, 1.8]).expect("valid mechanism");
    calibrate_critical(&motion, &mech).expect("two-site preset calibrates")
}

/// Asymmetric three-state motion on weights `(1, 0.5, 2)` with `gamma = (1.3, 1.3, 1.7)`.
pub fn three_site_mixed() -> CriticalModel {
    let space = StateSpace::new(vec![1.0, 0.5, 2.0]).expect("positive weights");
    let q = dmatrix![-2.0, 1.5, 0.5; 0.5, -1.0, 0.5; 1.0, 1.0, -2.5];
    let motion = MotionGenerator::new(space, q).expect("valid motion");
    let mech = BranchingMechanism::new(vec![0.2, -0.1, 0.4], vec![1.0, 0.5, 2.0], vec![1.3, 1.3, 1.7]).expect("valid mechanism");
    calibrate_critical(&motion, &mech).expect("three-site preset calibrates")
}

pub fn by_name(name: &str) -> Result<CriticalModel> {
    match name {
        "scalar-csbp" => Ok(scalar_csbp()),
        "two-site" => Ok(two_site()),
        "three-site-mixed" => Ok(three_site_mixed()),
        other => Err(Error::Invalid(format!("unknown preset `{other}`; expected one of {PRESET_NAMES:?}"))),
    }
}
