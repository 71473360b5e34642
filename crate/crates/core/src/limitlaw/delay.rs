//! Picard solver for the delay equation
//!
//! ```text
//! G(theta) = ∫_0^theta exp(-(a/(a-1)) J_G(r)) dr,
//! J_G(r)   = ∫_0^1 G(r u^{1/(a-1)})^{a-1} du / u.
//! ```
//!
//! With `y = r u^{1/(a-1)}` the inner integral becomes
//! `(a-1) ∫_0^r G(y)^{a-1} / y dy`, so both integrals are cumulative
//! integrals in the same variable. They are carried on a geometric mesh of
//! ratio-2 cells with 16 Gauss–Legendre nodes per cell; each cell stores the
//! Legendre expansion of its integrand so partial integrals are exact for the
//! interpolant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{GaussLegendre, LegendreCell};

/// Maximum number of Picard sweeps.
pub const PICARD_CAP: usize = 1000;
const NODES_PER_CELL: usize = 16;
/// Left end of the mesh; below it `G(y) = y` to within `y^{1 + (a-1)}`.
const MESH_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayEquationProblem {
    pub a: f64,
    pub theta_grid: Vec<f64>,
    pub tol: f64,
}

impl DelayEquationProblem {
    /// Uniform grid `0, step, 2 step, ..., theta_max`.
    pub fn uniform(a: f64, theta_max: f64, step: f64, tol: f64) -> Result<Self> {
        if !(step > 0.0 && theta_max >= 0.0) {
            return Err(Error::Invalid("grid step must be > 0 and theta_max >= 0".into()));
        }
        let n = (theta_max / step).round() as usize;
        let theta_grid = (0..=n).map(|i| (i as f64 * step).min(theta_max)).collect();
        Ok(Self { a, theta_grid, tol })
    }

    fn validate(&self) -> Result<()> {
        if !(self.a > 1.0 && self.a < 2.0) {
            return Err(Error::Invalid(format!("a must lie in (1, 2), got {}", self.a)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Invalid("tolerance must be > 0".into()));
        }
        match self.theta_grid.first() {
            Some(&t) if t == 0.0 => {}
            _ => return Err(Error::Invalid("theta grid must start at 0".into())),
        }
        if self.theta_grid.windows(2).any(|w| !(w[1] > w[0])) || self.theta_grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid("theta grid must be finite and strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelaySolution {
    pub theta: Vec<f64>,
    pub g: Vec<f64>,
    pub iterations: usize,
    /// Sup-grid change of each Picard sweep.
    pub changes: Vec<f64>,
}

struct Mesh {
    rule: GaussLegendre,
    /// Cell edges `r_0 < r_1 < ... < r_n`, `r_{j+1} = 2 r_j`.
    edges: Vec<f64>,
}

impl Mesh {
    fn new(theta_max: f64) -> Self {
        let cells = (theta_max / MESH_FLOOR).log2().ceil().max(1.0) as i32;
        let r0 = theta_max / 2f64.powi(cells);
        let edges = (0..=cells).map(|j| r0 * 2f64.powi(j)).collect();
        Self { rule: GaussLegendre::new(NODES_PER_CELL), edges }
    }

    fn cells(&self) -> usize {
        self.edges.len() - 1
    }

    fn node(&self, cell: usize, k: usize) -> f64 {
        let (lo, hi) = (self.edges[cell], self.edges[cell + 1]);
        0.5 * (lo + hi) + 0.5 * (hi - lo) * self.rule.nodes[k]
    }

    /// Cell index and reference coordinate of `theta > edges[0]`.
    fn locate(&self, theta: f64) -> (usize, f64) {
        let j = ((theta / self.edges[0]).log2().floor().max(0.0) as usize).min(self.cells() - 1);
        let (lo, hi) = (self.edges[j], self.edges[j + 1]);
        (j, (2.0 * (theta - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0))
    }
}

/// `G` represented by its value at the mesh floor and, per cell, the value at
/// the left edge plus the Legendre expansion of `G'`.
struct Iterate {
    floor_value: f64,
    edge_values: Vec<f64>,
    slopes: Vec<LegendreCell>,
}

impl Iterate {
    fn eval(&self, mesh: &Mesh, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        if theta <= mesh.edges[0] {
            return theta * self.floor_value / mesh.edges[0];
        }
        let (j, x) = mesh.locate(theta);
        let half = 0.5 * (mesh.edges[j + 1] - mesh.edges[j]);
        self.edge_values[j] + half * self.slopes[j].integral_from_left(x)
    }
}

/// One Picard sweep `G -> ∫_0^. exp(-a ∫_0^r G^{a-1}/y dy) dr` given `G` at
/// the mesh nodes and the floor.
fn sweep(mesh: &Mesh, a: f64, g_nodes: &[f64], g_floor: f64) -> Iterate {
    let b = a - 1.0;
    let n = mesh.rule.len();
    let r0 = mesh.edges[0];
    // ∫_0^{r0} G^b / y dy with G(y) = y g_floor / r0
    let mut k_edge = g_floor.powf(b) / b;
    // ∫_0^{r0} exp(-a y^b / b) dy to first order in r0^b
    let floor_value = r0 * (1.0 - a * k_edge / (1.0 + b));
    let mut g_edge = floor_value;
    let mut edge_values = Vec::with_capacity(mesh.cells());
    let mut slopes = Vec::with_capacity(mesh.cells());
    let mut samples = vec![0.0; n];
    for j in 0..mesh.cells() {
        let half = 0.5 * (mesh.edges[j + 1] - mesh.edges[j]);
        for k in 0..n {
            let y = mesh.node(j, k);
            samples[k] = g_nodes[j * n + k].max(0.0).powf(b) / y;
        }
        let inner = LegendreCell::from_samples(&mesh.rule, &samples);
        for k in 0..n {
            let kk = k_edge + half * inner.integral_from_left(mesh.rule.nodes[k]);
            samples[k] = (-a * kk).exp();
        }
        k_edge += half * inner.integral_from_left(1.0);
        let slope = LegendreCell::from_samples(&mesh.rule, &samples);
        edge_values.push(g_edge);
        g_edge += half * slope.integral_from_left(1.0);
        slopes.push(slope);
    }
    Iterate { floor_value, edge_values, slopes }
}

/// Solve for `G` on `prob.theta_grid` by Picard iteration from
/// `G_0(theta) = min(theta, 1)`, stopping when the sup-grid change is at
/// most `prob.tol`.
pub fn solve_delay_equation(prob: &DelayEquationProblem) -> Result<DelaySolution> {
    prob.validate()?;
    let theta_max = *prob.theta_grid.last().unwrap();
    if theta_max == 0.0 {
        return Ok(DelaySolution { theta: vec![0.0], g: vec![0.0], iterations: 0, changes: Vec::new() });
    }
    let mesh = Mesh::new(theta_max);
    let n = mesh.rule.len();
    let mut g_nodes: Vec<f64> = (0..mesh.cells())
        .flat_map(|j| (0..n).map(move |k| (j, k)))
        .map(|(j, k)| mesh.node(j, k).min(1.0))
        .collect();
    let mut g_floor = mesh.edges[0].min(1.0);
    let mut on_grid: Vec<f64> = prob.theta_grid.iter().map(|t| t.min(1.0)).collect();
    let mut changes = Vec::new();
    for it in 1..=PICARD_CAP {
        let next = sweep(&mesh, prob.a, &g_nodes, g_floor);
        let grid_next: Vec<f64> = prob.theta_grid.iter().map(|&t| next.eval(&mesh, t)).collect();
        let change = grid_next.iter().zip(&on_grid).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        changes.push(change);
        for j in 0..mesh.cells() {
            for k in 0..n {
                g_nodes[j * n + k] = next.eval(&mesh, mesh.node(j, k));
            }
        }
        g_floor = next.floor_value;
        on_grid = grid_next;
        log::trace!("delay equation sweep {it}: change {change:e}");
        if change <= prob.tol {
            return Ok(DelaySolution { theta: prob.theta_grid.clone(), g: on_grid, iterations: it, changes });
        }
    }
    Err(Error::PicardCap { iterations: PICARD_CAP, tol: prob.tol, change: *changes.last().unwrap() })
}

/// `J_G(r) = ∫_0^1 G(r u^{1/(a-1)})^{a-1} du / u` by the substitution
/// `u = e^{-s}` on `s` in `[0, 40 ln 10]` with a 64-point Gauss–Legendre rule
/// on each decade of `u`. Independent of the mesh used by the solver.
pub fn inner_integral<G: Fn(f64) -> f64>(g: G, a: f64, r: f64) -> f64 {
    let b = a - 1.0;
    let rule = GaussLegendre::new(64);
    let decade = std::f64::consts::LN_10;
    let mut total = 0.0;
    for k in 0..40 {
        let (lo, hi) = (k as f64 * decade, (k + 1) as f64 * decade);
        // du / u = -ds
        total += rule.integrate(lo, hi, |s| g(r * (-s / b).exp()).max(0.0).powf(b));
    }
    total
}
