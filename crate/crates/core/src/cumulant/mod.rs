//! Log-Laplace functional `V_t f` of the superprocess, the extinction
//! cumulant `v_t`, survival probabilities and the Yaglom-normalized surface.
//!
//! On a finite space the mild equation for `V_t f` is the site-wise ODE
//! `u' = A u - kappa * u^gamma`, `u(0) = f`, integrated here with an
//! adaptive embedded Runge–Kutta pair and dense output.

mod radau;
mod rk;

pub use rk::{DenseSolution, SolverReport};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{eta, CriticalModel, Field, InitialMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Start time of the motion-free warm start used for `v_t`.
    pub warm_start_time: f64,
    /// Rejected steps tolerated before switching to the implicit Radau IIA integrator.
    pub fallback_after_rejections: usize,
    /// Use the implicit integrator from the first step.
    pub force_implicit: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            warm_start_time: 1e-8,
            fallback_after_rejections: 1000,
            force_implicit: false,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step > 0.0 && self.warm_start_time > 0.0) {
            return Err(Error::Invalid("solver tolerances, max step and warm start must be > 0".into()));
        }
        Ok(())
    }
}

/// Initial condition of a cumulant curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    Field(Vec<f64>),
    Infinity,
}

/// `V_t f` sampled on a time grid.
#[derive(Debug, Clone)]
pub struct CumulantCurve {
    pub times: Vec<f64>,
    pub values: Vec<Field>,
    pub initial: InitialCondition,
    pub report: SolverReport,
    dense: Option<DenseSolution>,
}

impl CumulantCurve {
    /// Continuous extension, present when the curve was solved with
    /// [`solve_cumulant_dense`].
    pub fn dense(&self) -> Option<&DenseSolution> {
        self.dense.as_ref()
    }

    pub fn at(&self, i: usize) -> &[f64] {
        self.values[i].values()
    }
}

/// `u' = A u - psi_0(u)`.
pub(crate) struct CumulantSystem<'a> {
    a: &'a DMatrix<f64>,
    kappa: &'a [f64],
    gamma: &'a [f64],
}

impl<'a> CumulantSystem<'a> {
    pub(crate) fn new(model: &'a CriticalModel) -> Self {
        Self {
            a: model.generator(),
            kappa: model.mechanism().kappa(),
            gamma: model.mechanism().gamma(),
        }
    }
}

impl rk::System for CumulantSystem<'_> {
    fn dim(&self) -> usize {
        self.kappa.len()
    }

    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let n = y.len();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.a[(i, j)] * y[j];
            }
            let u = y[i];
            let nl = if u > 0.0 { self.kappa[i] * (self.gamma[i] * u.ln()).exp() } else { 0.0 };
            dy[i] = s - nl;
        }
    }

    fn jacobian(&self, y: &[f64], jac: &mut DMatrix<f64>) {
        jac.copy_from(self.a);
        for (i, u) in y.iter().enumerate() {
            if *u > 0.0 {
                jac[(i, i)] -= self.kappa[i] * self.gamma[i] * ((self.gamma[i] - 1.0) * u.ln()).exp();
            }
        }
    }
}

fn check_grid(times: &[f64], min: f64) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Invalid("empty time grid".into()));
    }
    if times.iter().any(|t| !t.is_finite() || *t < min) {
        return Err(Error::Invalid(format!("time grid must be finite and >= {min}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Invalid("time grid must be nondecreasing".into()));
    }
    Ok(())
}

fn check_field(model: &CriticalModel, f: &Field) -> Result<()> {
    check_len("field", model.dim(), f.len())?;
    if f.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Invalid("initial field must be finite and nonnegative".into()));
    }
    Ok(())
}

fn solve_from_field(
    model: &CriticalModel,
    f: &Field,
    times: &[f64],
    opts: &SolverOptions,
    keep_dense: bool,
) -> Result<CumulantCurve> {
    check_field(model, f)?;
    check_grid(times, 0.0)?;
    opts.validate()?;
    let scale = f.sup_norm();
    if scale == 0.0 {
        let dense = keep_dense.then(|| DenseSolution {
            segments: Vec::new(),
            start: 0.0,
            end: times.last().copied().unwrap_or(0.0),
            start_value: f.values().to_vec(),
        });
        return Ok(CumulantCurve {
            times: times.to_vec(),
            values: vec![f.clone(); times.len()],
            initial: InitialCondition::Field(f.values().to_vec()),
            report: SolverReport::default(),
            dense,
        });
    }
    let sys = CumulantSystem::new(model);
    let run = rk::integrate(&sys, 0.0, f.values(), times, opts, true, keep_dense)?;
    Ok(CumulantCurve {
        times: times.to_vec(),
        values: run.outputs.into_iter().map(Field).collect(),
        initial: InitialCondition::Field(f.values().to_vec()),
        report: run.report,
        dense: run.dense,
    })
}

/// `V_t f` on `times`.
///
/// The absolute tolerance is taken relative to the sup norm of the current
/// state, so curves started from tiny data (as in the Yaglom scaling) and
/// decaying curves keep full relative accuracy.
pub fn solve_cumulant(model: &CriticalModel, f: &Field, times: &[f64], opts: &SolverOptions) -> Result<CumulantCurve> {
    solve_from_field(model, f, times, opts, false)
}

/// As [`solve_cumulant`], retaining the continuous extension on `[0, max(times)]`.
pub fn solve_cumulant_dense(
    model: &CriticalModel,
    f: &Field,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<CumulantCurve> {
    solve_from_field(model, f, times, opts, true)
}

/// Motion-free scalar solution `(kappa (gamma - 1) t)^(-1/(gamma - 1))` per site.
pub fn warm_start(model: &CriticalModel, t0: f64) -> Vec<f64> {
    let mech = model.mechanism();
    mech.kappa()
        .iter()
        .zip(mech.gamma())
        .map(|(k, g)| (k * (g - 1.0) * t0).powf(-1.0 / (g - 1.0)))
        .collect()
}

fn extinction_run(model: &CriticalModel, times: &[f64], opts: &SolverOptions, t0: f64) -> Result<rk::Integration> {
    let sys = CumulantSystem::new(model);
    let y0 = warm_start(model, t0);
    rk::integrate(&sys, t0, &y0, times, opts, false, false)
}

/// Extinction cumulant `v_t = -log P_{delta_x}(||X_t|| = 0)`.
///
/// Starts from the motion-free solution at `t0 = opts.warm_start_time` and
/// certifies the result by repeating with `t0 / 2`; values are from the
/// halved run.
pub fn solve_extinction(model: &CriticalModel, times: &[f64], opts: &SolverOptions) -> Result<CumulantCurve> {
    opts.validate()?;
    let t0 = opts.warm_start_time;
    check_grid(times, 10.0 * t0)?;
    let coarse = extinction_run(model, times, opts, t0)?;
    let fine = extinction_run(model, times, opts, 0.5 * t0)?;
    let mut change = 0.0f64;
    for (a, b) in coarse.outputs.iter().zip(&fine.outputs) {
        for (x, y) in a.iter().zip(b) {
            change = change.max((x - y).abs() / y.abs().max(f64::MIN_POSITIVE));
        }
    }
    let limit = 10.0 * opts.rel_tol;
    if change > limit {
        return Err(Error::WarmStart { change, limit });
    }
    let mut report = fine.report;
    report.accepted += coarse.report.accepted;
    report.rejected += coarse.report.rejected;
    report.fallback_steps += coarse.report.fallback_steps;
    report.max_residual = report.max_residual.max(coarse.report.max_residual);
    Ok(CumulantCurve {
        times: times.to_vec(),
        values: fine.outputs.into_iter().map(Field).collect(),
        initial: InitialCondition::Infinity,
        report,
        dense: None,
    })
}

fn check_measure(model: &CriticalModel, mu: &InitialMeasure) -> Result<()> {
    check_len("initial measure", model.dim(), mu.masses().len())?;
    if mu.is_trivial() {
        return Err(Error::Invalid("initial measure is trivial".into()));
    }
    Ok(())
}

/// `1 - exp(-mu(v_t))` from an already solved extinction cumulant.
pub fn survival_from_cumulant(mu: &InitialMeasure, v: &[f64]) -> f64 {
    -(-mu.integrate(v)).exp_m1()
}

/// `P_mu(||X_t|| != 0) = 1 - exp(-mu(v_t))`.
pub fn survival_probability(model: &CriticalModel, mu: &InitialMeasure, t: f64, opts: &SolverOptions) -> Result<f64> {
    check_measure(model, mu)?;
    if !(t > 0.0) {
        return Err(Error::Invalid(format!("survival probability requires t > 0, got {t}")));
    }
    let curve = solve_extinction(model, &[t], opts)?;
    Ok(survival_from_cumulant(mu, curve.at(0)))
}

/// `<v_t, phi*>_m`.
pub fn weighted_extinction_norm(model: &CriticalModel, t: f64, opts: &SolverOptions) -> Result<f64> {
    Ok(weighted_extinction_norms(model, &[t], opts)?[0])
}

/// `<v_t, phi*>_m` for each `t` of a grid (one integration).
pub fn weighted_extinction_norms(model: &CriticalModel, times: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    let curve = solve_extinction(model, times, opts)?;
    Ok(curve.values.iter().map(|v| model.phi_star_pairing(v.values())).collect())
}

/// `sup_x | (v_t / phi)(x) / <v_t, phi*>_m - 1 |`.
pub fn uniform_equivalence_gap(model: &CriticalModel, t: f64, opts: &SolverOptions) -> Result<f64> {
    Ok(uniform_equivalence_gaps(model, &[t], opts)?[0])
}

pub fn uniform_equivalence_gaps(model: &CriticalModel, times: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    let curve = solve_extinction(model, times, opts)?;
    Ok(curve
        .values
        .iter()
        .map(|v| {
            let norm = model.phi_star_pairing(v.values());
            v.values()
                .iter()
                .zip(model.phi())
                .map(|(vx, p)| (vx / p / norm - 1.0).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}

/// Tolerance on `<f, phi*>_m = 1` for the Yaglom surface.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// `g(T, theta, x) = V_T(theta eta_T f)(x) / (eta_T phi(x))`.
pub fn yaglom_surface(model: &CriticalModel, f: &Field, theta: f64, horizon: f64, opts: &SolverOptions) -> Result<Field> {
    check_field(model, f)?;
    let pairing = model.phi_star_pairing(f.values());
    if (pairing - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Unnormalized(pairing));
    }
    if !(theta >= 0.0) {
        return Err(Error::Invalid(format!("theta must be >= 0, got {theta}")));
    }
    let eta_t = eta(model, horizon)?;
    if theta == 0.0 {
        return Ok(Field::constant(model.dim(), 0.0));
    }
    let curve = solve_cumulant(model, &f.scaled(theta * eta_t), &[horizon], opts)?;
    Ok(Field(
        curve.at(0).iter().zip(model.phi()).map(|(v, p)| v / (eta_t * p)).collect(),
    ))
}

/// Rescale a nonnegative field so that `<f, phi*>_m = 1`.
pub fn normalize_field(model: &CriticalModel, f: &Field) -> Result<Field> {
    check_field(model, f)?;
    let pairing = model.phi_star_pairing(f.values());
    if !(pairing > 0.0) {
        return Err(Error::Invalid("field has zero pairing with phi*".into()));
    }
    Ok(f.scaled(1.0 / pairing))
}
