//! Finite-state spatial motion, stable branching mechanism and the
//! criticality calibration of the Feynman–Kac (mean) semigroup.

mod semigroup;
mod spectral;

pub use semigroup::{semigroup_apply, transition_matrix, uniform_mixing_gap};
pub use spectral::{principal_eigen, DENSE_LIMIT};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Sites whose index lies within this distance of the minimum count as
/// attaining it.
pub const GAMMA_TIE_TOL: f64 = 1e-12;

/// Relative (to `‖A‖∞`) bound on the principal eigenvalue after calibration.
pub const CRITICALITY_TOL: f64 = 1e-12;

/// Finite state space `{0, .., d-1}` with reference weights `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    weights: Vec<f64>,
}

impl StateSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Invalid("state space must have at least one site".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Invalid(format!("reference weight {w} is not strictly positive")));
        }
        Ok(Self { weights })
    }

    /// Counting measure on `d` sites.
    pub fn counting(d: usize) -> Result<Self> {
        Self::new(vec![1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `<f, g>_m`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f.iter().zip(g))
            .map(|(m, (a, b))| m * a * b)
            .sum()
    }
}

/// Rate matrix of an irreducible continuous-time Markov chain, possibly with
/// killing (negative row sums).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionGenerator {
    space: StateSpace,
    rates: DMatrix<f64>,
}

impl MotionGenerator {
    pub fn new(space: StateSpace, rates: DMatrix<f64>) -> Result<Self> {
        let d = space.dim();
        check_len("rate matrix rows", d, rates.nrows())?;
        check_len("rate matrix columns", d, rates.ncols())?;
        let scale = rates.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        for i in 0..d {
            let mut row_sum = 0.0;
            for j in 0..d {
                let q = rates[(i, j)];
                if !q.is_finite() {
                    return Err(Error::Invalid(format!("rate Q[{i}][{j}] is not finite")));
                }
                if i != j && q < 0.0 {
                    return Err(Error::Invalid(format!("off-diagonal rate Q[{i}][{j}] = {q} < 0")));
                }
                row_sum += q;
            }
            if row_sum > 1e-12 * scale {
                return Err(Error::Invalid(format!("row {i} of Q sums to {row_sum} > 0")));
            }
        }
        spectral::check_irreducible(&rates)?;
        Ok(Self { space, rates })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }
}

/// Site-indexed coefficients of `psi(x, z) = -beta(x) z + kappa(x) z^gamma(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingMechanism {
    beta: Vec<f64>,
    kappa: Vec<f64>,
    gamma: Vec<f64>,
}

impl BranchingMechanism {
    pub fn new(beta: Vec<f64>, kappa: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        check_len("kappa", beta.len(), kappa.len())?;
        check_len("gamma", beta.len(), gamma.len())?;
        if beta.is_empty() {
            return Err(Error::Invalid("branching mechanism has no sites".into()));
        }
        if let Some(b) = beta.iter().find(|b| !b.is_finite()) {
            return Err(Error::Invalid(format!("beta {b} is not finite")));
        }
        if let Some(k) = kappa.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(Error::Invalid(format!("kappa {k} must be strictly positive")));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 1.0 && **g < 2.0)) {
            return Err(Error::Invalid(format!("stable index {g} outside (1, 2)")));
        }
        Ok(Self { beta, kappa, gamma })
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `psi_0(x, z) = kappa(x) z^gamma(x)`, zero for `z <= 0`.
    #[inline]
    pub fn psi0(&self, site: usize, z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else {
            self.kappa[site] * (self.gamma[site] * z.ln()).exp()
        }
    }

    fn with_beta(&self, beta: Vec<f64>) -> Self {
        Self {
            beta,
            kappa: self.kappa.clone(),
            gamma: self.gamma.clone(),
        }
    }
}

/// Principal eigen-triple of `A = Q + diag(beta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    pub lambda: f64,
    pub phi: Vec<f64>,
    pub phi_star: Vec<f64>,
}

/// A function on the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn constant(d: usize, value: f64) -> Self {
        Self(vec![value; d])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| c * v).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |s, v| s.max(v.abs()))
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Finite measure on the state space given by its atoms: `mu(f) = sum_x masses[x] f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InitialMeasure(pub Vec<f64>);

impl InitialMeasure {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::Invalid(format!("mass {m} is not a nonnegative number")));
        }
        Ok(Self(masses))
    }

    pub fn dirac(d: usize, site: usize, mass: f64) -> Self {
        let mut v = vec![0.0; d];
        v[site] = mass;
        Self(v)
    }

    pub fn masses(&self) -> &[f64] {
        &self.0
    }

    pub fn is_trivial(&self) -> bool {
        self.0.iter().all(|m| *m == 0.0)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `mu(f)`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.0.iter().zip(f).map(|(m, v)| m * v).sum()
    }
}

/// `A = Q + diag(beta)`, the generator of the mean semigroup.
pub fn build_feynman_kac_matrix(
    motion: &MotionGenerator,
    mech: &BranchingMechanism,
) -> Result<DMatrix<f64>> {
    check_len("branching mechanism", motion.dim(), mech.dim())?;
    let mut a = motion.rates().clone();
    for (i, b) in mech.beta().iter().enumerate() {
        a[(i, i)] += b;
    }
    Ok(a)
}

/// Calibrated model: motion, mechanism with `lambda = 0`, Perron data and
/// the derived constants `C_X` and `gamma_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalModel {
    motion: MotionGenerator,
    mechanism: BranchingMechanism,
    eigen: EigenData,
    generator: DMatrix<f64>,
    c_x: f64,
    gamma0: f64,
}

/// Shift `beta` by the principal eigenvalue so that the mean semigroup is critical.
pub fn calibrate_critical(
    motion: &MotionGenerator,
    mech: &BranchingMechanism,
) -> Result<CriticalModel> {
    let a = build_feynman_kac_matrix(motion, mech)?;
    let first = principal_eigen(&a, motion.space().weights())?;
    let beta: Vec<f64> = mech.beta().iter().map(|b| b - first.lambda).collect();
    CriticalModel::from_parts(motion.clone(), mech.with_beta(beta))
}

impl CriticalModel {
    /// Assemble a model whose mechanism is already critical; fails otherwise.
    pub fn from_parts(motion: MotionGenerator, mechanism: BranchingMechanism) -> Result<Self> {
        let generator = build_feynman_kac_matrix(&motion, &mechanism)?;
        let eigen = principal_eigen(&generator, motion.space().weights())?;
        let norm = generator.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        let tolerance = CRITICALITY_TOL * norm.max(f64::MIN_POSITIVE);
        if eigen.lambda.abs() > tolerance.max(1e-300) {
            return Err(Error::NotCritical {
                lambda: eigen.lambda,
                tolerance,
            });
        }
        let gamma0 = mechanism.gamma0();
        let m = motion.space().weights();
        let c_x = (0..motion.dim())
            .filter(|&x| mechanism.gamma()[x] - gamma0 <= GAMMA_TIE_TOL)
            .map(|x| mechanism.kappa()[x] * eigen.phi[x].powf(gamma0) * eigen.phi_star[x] * m[x])
            .sum();
        Ok(Self {
            motion,
            mechanism,
            eigen,
            generator,
            c_x,
            gamma0,
        })
    }

    pub fn dim(&self) -> usize {
        self.motion.dim()
    }

    pub fn motion(&self) -> &MotionGenerator {
        &self.motion
    }

    pub fn mechanism(&self) -> &BranchingMechanism {
        &self.mechanism
    }

    pub fn eigen(&self) -> &EigenData {
        &self.eigen
    }

    pub fn phi(&self) -> &[f64] {
        &self.eigen.phi
    }

    pub fn phi_star(&self) -> &[f64] {
        &self.eigen.phi_star
    }

    pub fn weights(&self) -> &[f64] {
        self.motion.space().weights()
    }

    /// `A = Q + diag(beta)`.
    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn c_x(&self) -> f64 {
        self.c_x
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// `<f, phi*>_m`.
    pub fn phi_star_pairing(&self, f: &[f64]) -> f64 {
        self.motion.space().inner(f, &self.eigen.phi_star)
    }
}

/// `eta_t = (C_X (gamma_0 - 1) t)^(-1/(gamma_0 - 1))`.
pub fn eta(model: &CriticalModel, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Invalid(format!("eta requires t > 0, got {t}")));
    }
    let a = model.gamma0() - 1.0;
    Ok((model.c_x() * a * t).powf(-1.0 / a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn sym2() -> MotionGenerator {
        MotionGenerator::new(StateSpace::counting(2).unwrap(), dmatrix![-1.0, 1.0; 1.0, -1.0]).unwrap()
    }

    #[test]
    fn feynman_kac_matrix_adds_diagonal() {
        let mech = BranchingMechanism::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.5, 1.5]).unwrap();
        assert_eq!(build_feynman_kac_matrix(&sym2(), &mech).unwrap(), dmatrix![-1.0, 1.0; 1.0, -1.0]);
        let mech = BranchingMechanism::new(vec![0.5, -0.5], vec![1.0, 1.0], vec![1.5, 1.5]).unwrap();
        assert_eq!(build_feynman_kac_matrix(&sym2(), &mech).unwrap(), dmatrix![-0.5, 1.0; 1.0, -1.5]);
        let one = MotionGenerator::new(StateSpace::counting(1).unwrap(), dmatrix![0.0]).unwrap();
        let mech = BranchingMechanism::new(vec![-2.0], vec![1.0], vec![1.5]).unwrap();
        assert_eq!(build_feynman_kac_matrix(&one, &mech).unwrap(), dmatrix![-2.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mech = BranchingMechanism::new(vec![0.0], vec![1.0], vec![1.5]).unwrap();
        assert!(matches!(build_feynman_kac_matrix(&sym2(), &mech), Err(Error::Dimension { .. })));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(StateSpace::new(vec![]).is_err());
        assert!(StateSpace::new(vec![1.0, 0.0]).is_err());
        let sp = StateSpace::counting(2).unwrap();
        assert!(MotionGenerator::new(sp.clone(), dmatrix![-1.0, -0.1; 1.0, -1.0]).is_err());
        assert!(MotionGenerator::new(sp.clone(), dmatrix![-1.0, 2.0; 1.0, -1.0]).is_err());
        // reducible: site 1 never reaches site 0
        assert!(matches!(
            MotionGenerator::new(sp.clone(), dmatrix![-1.0, 1.0; 0.0, -1.0]),
            Err(Error::Reducible(_))
        ));
        // killing is allowed
        assert!(MotionGenerator::new(sp, dmatrix![-2.0, 1.0; 1.0, -1.0]).is_ok());
        assert!(BranchingMechanism::new(vec![0.0], vec![1.0], vec![2.0]).is_err());
        assert!(BranchingMechanism::new(vec![0.0], vec![0.0], vec![1.5]).is_err());
        assert!(BranchingMechanism::new(vec![0.0], vec![1.0, 1.0], vec![1.5]).is_err());
    }

    #[test]
    fn uniform_shift_cancels() {
        let mech = BranchingMechanism::new(vec![0.3, 0.3], vec![1.0, 1.0], vec![1.5, 1.5]).unwrap();
        let model = calibrate_critical(&sym2(), &mech).unwrap();
        for b in model.mechanism().beta() {
            assert!(b.abs() < 1e-14);
        }
        assert!(model.eigen().lambda.abs() < 1e-14);
    }

    #[test]
    fn scalar_calibration() {
        let one = MotionGenerator::new(StateSpace::counting(1).unwrap(), dmatrix![0.0]).unwrap();
        let mech = BranchingMechanism::new(vec![0.7], vec![1.0], vec![1.5]).unwrap();
        let model = calibrate_critical(&one, &mech).unwrap();
        assert!(model.mechanism().beta()[0].abs() < 1e-15);
        assert!((model.phi()[0] - 1.0).abs() < 1e-15);
        assert!((model.phi_star()[0] - 1.0).abs() < 1e-15);
        assert!((model.c_x() - 1.0).abs() < 1e-15);
        assert!((eta(&model, 1.0).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_site_mixed_constants() {
        let mech = BranchingMechanism::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.2, 1.8]).unwrap();
        let model = calibrate_critical(&sym2(), &mech).unwrap();
        assert_eq!(model.gamma0(), 1.2);
        // (2^{-1/2})^{1.2} * 2^{-1/2} = 2^{-1.1}
        assert!((model.c_x() - 2f64.powf(-1.1)).abs() < 1e-13);
        assert!((model.c_x() - 0.46651).abs() < 1e-5);
        let e = eta(&model, 10.0).unwrap();
        assert!((e - (2f64.powf(-1.1) * 0.2 * 10.0).powf(-5.0)).abs() < 1e-12);
        // (2^{-1.1} * 2)^{-5} = 2^{1/2}
        assert!((e - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn eta_rejects_nonpositive_time() {
        let one = MotionGenerator::new(StateSpace::counting(1).unwrap(), dmatrix![0.0]).unwrap();
        let mech = BranchingMechanism::new(vec![0.0], vec![1.0], vec![1.5]).unwrap();
        let model = calibrate_critical(&one, &mech).unwrap();
        assert!(eta(&model, 0.0).is_err());
        assert!(eta(&model, -1.0).is_err());
        // unit argument
        assert!((eta(&model, 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_critical_parts_are_rejected() {
        let mech = BranchingMechanism::new(vec![0.1, 0.1], vec![1.0, 1.0], vec![1.5, 1.5]).unwrap();
        assert!(matches!(CriticalModel::from_parts(sym2(), mech), Err(Error::NotCritical { .. })));
    }

    #[test]
    fn gamma_ties_within_tolerance_count() {
        let mech = BranchingMechanism::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.5, 1.5 + 1e-13]).unwrap();
        let model = calibrate_critical(&sym2(), &mech).unwrap();
        // both sites count: sum_x phi^1.5 phi* = 2 * 2^{-1.25}
        assert!((model.c_x() - 2.0 * 2f64.powf(-1.25)).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn eta_scaling_identity(u in 0.01f64..100.0, t in 0.01f64..100.0, g in 1.05f64..1.95) {
                let one = MotionGenerator::new(StateSpace::counting(1).unwrap(), dmatrix![0.0]).unwrap();
                let mech = BranchingMechanism::new(vec![0.0], vec![1.3], vec![g]).unwrap();
                let model = calibrate_critical(&one, &mech).unwrap();
                let lhs = eta(&model, u * t).unwrap();
                let rhs = u.powf(-1.0 / (g - 1.0)) * eta(&model, t).unwrap();
                prop_assert!((lhs / rhs - 1.0).abs() < 1e-12);
            }
        }
    }
}
