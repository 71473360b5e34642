//! The spine: the motion h-transformed by the Perron eigenfunction `phi`.
//!
//! Under the transformed law the spine is an irreducible Markov chain with
//! generator `Q_phi = Phi^{-1} A Phi` and invariant law `phi phi* m`. The
//! derivative in `theta` of `V_T(theta f)` is a Feynman–Kac functional of
//! the spine, which [`feynman_kac_estimate`] integrates back over `theta`
//! by Gauss–Legendre quadrature with paths shared across the nodes.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant::{solve_cumulant_dense, DenseSolution, SolverOptions};
use crate::error::{check_len, Error, Result};
use crate::model::{CriticalModel, Field};
use crate::quad::{adaptive_simpson, GaussLegendre};
use crate::simulator::{replicate_rng, Estimate};

/// Largest tolerated `|row sum|` of the transformed generator.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Outer `theta` quadrature size used when none is requested.
pub const DEFAULT_THETA_NODES: usize = 16;

/// Tolerance of the per-segment exponent quadrature.
pub const EXPONENT_TOL: f64 = 1e-9;

/// Fewest spine paths accepted per start site.
pub const MIN_PATHS: usize = 30;

/// Gauss–Legendre nodes per constant segment in [`ergodic_average_check`].
const SEGMENT_NODES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SpineChain {
    generator: DMatrix<f64>,
    stationary: Vec<f64>,
    weights: Vec<f64>,
    exit_rates: Vec<f64>,
    /// Per row, cumulative jump probabilities over the target sites.
    jump_cdf: Vec<Vec<f64>>,
}

/// Build `Q_phi(x, y) = A(x, y) phi(y) / phi(x)` for `x != y`, with the
/// diagonal closing each row exactly.
pub fn spine_generator(model: &CriticalModel) -> Result<SpineChain> {
    let a = model.generator();
    let phi = model.phi();
    let d = model.dim();
    let norm = a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(1.0, f64::max);
    let mut q = DMatrix::zeros(d, d);
    for x in 0..d {
        let mut off = 0.0;
        let mut residual = a[(x, x)];
        for y in (0..d).filter(|&y| y != x) {
            let v = a[(x, y)] * phi[y] / phi[x];
            q[(x, y)] = v;
            off += v;
            residual += v;
        }
        if residual.abs() > ROW_SUM_TOL * norm {
            return Err(Error::NotCritical {
                lambda: residual,
                tolerance: ROW_SUM_TOL * norm,
            });
        }
        q[(x, x)] = -off;
    }
    let stationary: Vec<f64> = phi.iter().zip(model.phi_star()).map(|(p, s)| p * s).collect();
    let exit_rates: Vec<f64> = (0..d).map(|x| -q[(x, x)]).collect();
    let jump_cdf = (0..d)
        .map(|x| {
            let mut acc = 0.0;
            (0..d)
                .map(|y| {
                    if y != x && exit_rates[x] > 0.0 {
                        acc += q[(x, y)] / exit_rates[x];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(SpineChain {
        generator: q,
        stationary,
        weights: model.weights().to_vec(),
        exit_rates,
        jump_cdf,
    })
}

impl SpineChain {
    pub fn dim(&self) -> usize {
        self.stationary.len()
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    /// Density `phi phi*` of the invariant law with respect to `m`.
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Invariant probabilities `phi phi* m`.
    pub fn stationary_mass(&self) -> Vec<f64> {
        self.stationary.iter().zip(&self.weights).map(|(s, m)| s * m).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest `|row sum|` of the generator.
    pub fn row_sum_defect(&self) -> f64 {
        self.generator.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max)
    }

    /// Largest entry of `|(phi phi* m)^T Q_phi|`.
    pub fn stationarity_defect(&self) -> f64 {
        let mass = self.stationary_mass();
        (0..self.dim())
            .map(|y| (0..self.dim()).map(|x| mass[x] * self.generator[(x, y)]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    fn jump_target<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let cdf = &self.jump_cdf[x];
        let last = (0..self.dim()).rev().find(|&y| y != x && self.generator[(x, y)] > 0.0).unwrap_or(x);
        (0..self.dim())
            .find(|&y| y != x && self.generator[(x, y)] > 0.0 && u < cdf[y])
            .unwrap_or(last)
    }
}

/// Piecewise-constant right-continuous trajectory on `[0, horizon]`.
/// `states[0]` is the start and `states[i + 1]` is entered at `jump_times[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinePath {
    pub start: usize,
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    pub horizon: f64,
}

impl SpinePath {
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.states[k]
    }

    pub fn terminal(&self) -> usize {
        *self.states.last().expect("path has a start state")
    }

    /// `(s1, s2, site)` for each constant piece, in time order.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        let n = self.states.len();
        (0..n).map(move |i| {
            let s1 = if i == 0 { 0.0 } else { self.jump_times[i - 1] };
            let s2 = if i + 1 < n { self.jump_times[i] } else { self.horizon };
            (s1, s2, self.states[i])
        })
    }

    /// Time spent at each site.
    pub fn occupation_times(&self, d: usize) -> Vec<f64> {
        let mut occ = vec![0.0; d];
        for (s1, s2, y) in self.segments() {
            occ[y] += s2 - s1;
        }
        occ
    }
}

/// Event-driven simulation of the spine from `start` up to `horizon`.
pub fn simulate_spine<R: Rng + ?Sized>(chain: &SpineChain, start: usize, horizon: f64, rng: &mut R) -> Result<SpinePath> {
    if start >= chain.dim() {
        return Err(Error::Invalid(format!("start site {start} outside 0..{}", chain.dim())));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Invalid(format!("spine horizon must be finite and > 0, got {horizon}")));
    }
    let mut jump_times = Vec::new();
    let mut states = vec![start];
    let mut x = start;
    let mut t = 0.0;
    loop {
        let rate = chain.exit_rates[x];
        if rate <= 0.0 {
            break;
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / rate;
        t += hold;
        if t >= horizon {
            break;
        }
        x = chain.jump_target(x, rng);
        jump_times.push(t);
        states.push(x);
    }
    Ok(SpinePath {
        start,
        jump_times,
        states,
        horizon,
    })
}

/// `F_y(tau) = int_0^tau kappa gamma V_s(r f)^{gamma - 1}(y) ds` for one node `r`.
struct ExponentTable {
    dense: DenseSolution,
    breaks: Vec<f64>,
    /// `cumulative[y][j] = F_y(breaks[j])`.
    cumulative: Vec<Vec<f64>>,
    kappa_gamma: Vec<f64>,
    exponent: Vec<f64>,
}

impl ExponentTable {
    fn new(model: &CriticalModel, f: &Field, horizon: f64, opts: &SolverOptions) -> Result<Self> {
        let curve = solve_cumulant_dense(model, f, &[horizon], opts)?;
        let dense = curve.dense().cloned().ok_or_else(|| Error::Invalid("cumulant data missing for node".into()))?;
        let mech = model.mechanism();
        let d = model.dim();
        let mut table = Self {
            breaks: dense.breakpoints(),
            dense,
            cumulative: vec![Vec::new(); d],
            kappa_gamma: mech.kappa().iter().zip(mech.gamma()).map(|(k, g)| k * g).collect(),
            exponent: mech.gamma().iter().map(|g| g - 1.0).collect(),
        };
        let mut buf = vec![0.0; d];
        for y in 0..d {
            let mut acc = 0.0;
            let mut cum = vec![0.0];
            for w in table.breaks.windows(2) {
                acc += adaptive_simpson(|s| table.rate(y, s, &mut buf), w[0], w[1], EXPONENT_TOL);
                cum.push(acc);
            }
            table.cumulative[y] = cum;
        }
        Ok(table)
    }

    fn rate(&self, y: usize, s: f64, buf: &mut [f64]) -> f64 {
        self.dense.eval_into(s, buf);
        self.kappa_gamma[y] * buf[y].max(0.0).powf(self.exponent[y])
    }

    fn cumulative(&self, y: usize, tau: f64, buf: &mut [f64]) -> f64 {
        let j = self.breaks.partition_point(|&b| b <= tau).saturating_sub(1);
        let j = j.min(self.breaks.len() - 1);
        let base = self.cumulative[y][j];
        if tau <= self.breaks[j] {
            return base;
        }
        base + adaptive_simpson(|s| self.rate(y, s, buf), self.breaks[j], tau, EXPONENT_TOL)
    }

    /// `int_{s1}^{s2} kappa gamma V_{T - s}^{gamma - 1}(y) ds`.
    fn segment(&self, y: usize, horizon: f64, s1: f64, s2: f64, buf: &mut [f64]) -> f64 {
        self.cumulative(y, horizon - s1, buf) - self.cumulative(y, (horizon - s2).max(0.0), buf)
    }
}

/// Quadrature nodes `(r, weight)` for `int_0^theta dr`.
///
/// Near `r = 0` the integrand expands in powers of `r^{gamma - 1}`, so the
/// rule is applied in `s` with `r = theta s^q`, `q` the integer ceiling of
/// `1 / (gamma_0 - 1)`. The leading term becomes at least Lipschitz in `s`
/// and the Jacobian stays a polynomial.
fn theta_nodes_for(model: &CriticalModel, theta: f64, n: usize) -> Vec<(f64, f64)> {
    let q = (1.0 / (model.gamma0() - 1.0) - 1e-9).ceil().max(1.0) as i32;
    GaussLegendre::new(n)
        .mapped(0.0, 1.0)
        .map(|(s, w)| (theta * s.powi(q), w * q as f64 * theta * s.powi(q - 1)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeynmanKacConfig {
    pub theta: f64,
    pub horizon: f64,
    /// Spine paths per start site.
    pub replicates: usize,
    pub theta_nodes: usize,
    pub seed: u64,
}

impl FeynmanKacConfig {
    pub fn new(theta: f64, horizon: f64, replicates: usize, seed: u64) -> Self {
        Self {
            theta,
            horizon,
            replicates,
            theta_nodes: DEFAULT_THETA_NODES,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeynmanKacEstimate {
    pub estimate: Field,
    pub stderr: Field,
}

/// Monte Carlo estimate of `V_T(theta f)(x)` for every start site `x` from
/// `phi(x) int_0^theta E^phi_x[(f/phi)(xi_T) exp(-int_0^T kappa gamma V_{T-s}(r f)^{gamma-1}(xi_s) ds)] dr`.
pub fn feynman_kac_estimate(
    model: &CriticalModel,
    f: &Field,
    config: &FeynmanKacConfig,
    opts: &SolverOptions,
) -> Result<FeynmanKacEstimate> {
    let d = model.dim();
    check_len("field", d, f.len())?;
    let FeynmanKacConfig {
        theta,
        horizon,
        replicates,
        theta_nodes,
        seed,
    } = *config;
    if f.values().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Invalid("Feynman-Kac field must be finite and nonnegative".into()));
    }
    if !(theta >= 0.0 && theta.is_finite() && horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Invalid(format!("need theta >= 0 and T > 0, got theta = {theta}, T = {horizon}")));
    }
    if theta_nodes == 0 {
        return Err(Error::Invalid("theta quadrature needs at least one node".into()));
    }
    if replicates < MIN_PATHS {
        return Err(Error::TooFewSamples {
            have: replicates,
            need: MIN_PATHS,
        });
    }
    if theta == 0.0 {
        return Ok(FeynmanKacEstimate {
            estimate: Field::constant(d, 0.0),
            stderr: Field::constant(d, 0.0),
        });
    }
    let chain = spine_generator(model)?;
    let nodes = theta_nodes_for(model, theta, theta_nodes);
    let tables = nodes
        .par_iter()
        .map(|&(r, _)| ExponentTable::new(model, &f.scaled(r), horizon, opts))
        .collect::<Result<Vec<_>>>()?;
    let phi = model.phi();
    let ratio: Vec<f64> = f.values().iter().zip(phi).map(|(v, p)| v / p).collect();

    let mut estimate = vec![0.0; d];
    let mut stderr = vec![0.0; d];
    for x in 0..d {
        let samples = (0..replicates as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(seed, x as u64 * replicates as u64 + i);
                let path = simulate_spine(&chain, x, horizon, &mut rng)?;
                let end = ratio[path.terminal()];
                if end == 0.0 {
                    return Ok(0.0);
                }
                let mut buf = vec![0.0; d];
                let mut total = 0.0;
                for (table, &(_, w)) in tables.iter().zip(&nodes) {
                    let e: f64 = path.segments().map(|(s1, s2, y)| table.segment(y, horizon, s1, s2, &mut buf)).sum();
                    total += w * (-e).exp();
                }
                Ok(phi[x] * end * total)
            })
            .collect::<Result<Vec<f64>>>()?;
        let e = Estimate::from_samples(samples);
        estimate[x] = e.mean;
        stderr[x] = e.se;
    }
    Ok(FeynmanKacEstimate {
        estimate: Field(estimate),
        stderr: Field(stderr),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicCheck {
    pub estimate: f64,
    pub target: f64,
    pub stderr: f64,
    /// Root mean square of the per-path deviation from the target.
    pub l2_distance: f64,
}

/// Compare `int_0^1 F(xi_{(1-u)T}, u) du` along spine paths with
/// `int_0^1 <F(., u), phi phi*>_m du`.
pub fn ergodic_average_check<F>(
    chain: &SpineChain,
    func: F,
    start: usize,
    horizon: f64,
    replicates: usize,
    seed: u64,
) -> Result<ErgodicCheck>
where
    F: Fn(usize, f64) -> f64 + Sync,
{
    if replicates < 2 {
        return Err(Error::TooFewSamples { have: replicates, need: 2 });
    }
    let mass = chain.stationary_mass();
    let target = adaptive_simpson(
        |u| mass.iter().enumerate().map(|(y, p)| p * func(y, u)).sum(),
        0.0,
        1.0,
        1e-12,
    );
    let rule = GaussLegendre::new(SEGMENT_NODES);
    let values = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let path = simulate_spine(chain, start, horizon, &mut rng)?;
            // time s on the path corresponds to u = 1 - s / T
            Ok(path
                .segments()
                .map(|(s1, s2, y)| rule.integrate(1.0 - s2 / horizon, 1.0 - s1 / horizon, |u| func(y, u)))
                .sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    let e = Estimate::from_samples(values.iter().copied());
    let l2 = (values.iter().map(|v| (v - target).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
    Ok(ErgodicCheck {
        estimate: e.mean,
        target,
        stderr: e.se,
        l2_distance: l2,
    })
}
