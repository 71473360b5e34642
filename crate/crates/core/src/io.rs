//! JSON model files and their content hash.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_len, Error, Result};
use crate::model::{calibrate_critical, BranchingMechanism, CriticalModel, MotionGenerator, StateSpace};

/// On-disk model. The calibrated fields are present only in files written
/// from a [`CriticalModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub d: usize,
    pub m: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub kappa: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    #[serde(default, rename = "phiStar", skip_serializing_if = "Option::is_none")]
    pub phi_star: Option<Vec<f64>>,
    #[serde(default, rename = "C_X", skip_serializing_if = "Option::is_none")]
    pub c_x: Option<f64>,
    #[serde(default, rename = "gamma0", skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
}

impl ModelFile {
    pub fn from_model(model: &CriticalModel) -> Self {
        let d = model.dim();
        let rates = model.motion().rates();
        let mech = model.mechanism();
        Self {
            d,
            m: model.weights().to_vec(),
            q: (0..d).map(|i| (0..d).map(|j| rates[(i, j)]).collect()).collect(),
            beta: mech.beta().to_vec(),
            kappa: mech.kappa().to_vec(),
            gamma: mech.gamma().to_vec(),
            lambda: Some(model.eigen().lambda),
            phi: Some(model.phi().to_vec()),
            phi_star: Some(model.phi_star().to_vec()),
            c_x: Some(model.c_x()),
            gamma0: Some(model.gamma0()),
        }
    }

    pub fn is_calibrated(&self) -> bool {
        self.lambda.is_some()
    }

    pub fn parts(&self) -> Result<(MotionGenerator, BranchingMechanism)> {
        check_len("m", self.d, self.m.len())?;
        check_len("Q rows", self.d, self.q.len())?;
        for row in &self.q {
            check_len("Q row", self.d, row.len())?;
        }
        let rates = DMatrix::from_fn(self.d, self.d, |i, j| self.q[i][j]);
        let motion = MotionGenerator::new(StateSpace::new(self.m.clone())?, rates)?;
        let mech = BranchingMechanism::new(self.beta.clone(), self.kappa.clone(), self.gamma.clone())?;
        Ok((motion, mech))
    }

    /// A calibrated file must already be critical and is rebuilt as is;
    /// a raw file has its `beta` shifted by the principal eigenvalue.
    pub fn to_model(&self) -> Result<CriticalModel> {
        let (motion, mech) = self.parts()?;
        if self.is_calibrated() {
            CriticalModel::from_parts(motion, mech)
        } else {
            calibrate_critical(&motion, &mech)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        if file.d == 0 {
            return Err(Error::Invalid("model file has d = 0".into()));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    /// SHA-256 of the compact JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model file serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

pub fn model_hash(model: &CriticalModel) -> String {
    ModelFile::from_model(model).hash()
}
