//! Asymptotic diagnostics built on the cumulant solver: log-log index fits,
//! Kolmogorov and Yaglom convergence tables and the mixture lemma check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant::{solve_extinction, survival_from_cumulant, yaglom_surface, SolverOptions};
use crate::error::{check_len, Error, Result};
use crate::limitlaw::g_closed;
use crate::model::{eta, CriticalModel, Field, InitialMeasure};

/// Ties in the stable index closer than this count as the same index.
pub const INDEX_TIE_TOL: f64 = 1e-12;

/// Decades of the grid kept by the default fit window.
pub const DEFAULT_WINDOW_DECADES: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RVEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub point_count: usize,
}

/// Least-squares slope of `log value` against `log t` over the top two
/// decades of the grid.
pub fn rv_index_fit(times: &[f64], values: &[f64]) -> Result<RVEstimate> {
    let t_max = times.last().copied().unwrap_or(f64::NAN);
    rv_index_fit_window(times, values, (t_max / 10f64.powf(DEFAULT_WINDOW_DECADES), t_max))
}

/// As [`rv_index_fit`] restricted to `window.0 <= t <= window.1`.
pub fn rv_index_fit_window(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<RVEstimate> {
    check_len("values", times.len(), values.len())?;
    if times.iter().chain(values).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Invalid("regular-variation fit needs finite positive times and values".into()));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("fit times must be strictly increasing".into()));
    }
    if !(window.0 > 0.0 && window.0 < window.1) {
        return Err(Error::Invalid(format!("invalid fit window {window:?}")));
    }
    let kept: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 * (1.0 - 1e-12) && **t <= window.1 * (1.0 + 1e-12))
        .map(|(t, v)| (*t, *v))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = kept.iter().map(|(t, v)| (t.ln(), v.ln())).unzip();
    let n = xs.len();
    if n < 3 {
        return Err(Error::TooFewSamples { have: n, need: 3 });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RVEstimate {
        slope,
        intercept,
        stderr: (rss / (nf - 2.0) / sxx).sqrt(),
        window: (kept[0].0, kept[n - 1].0),
        point_count: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovRow {
    pub t: f64,
    pub survival: f64,
    pub eta: f64,
    /// `survival / eta`.
    pub ratio: f64,
    /// `mu(phi)`.
    pub target: f64,
}

impl KolmogorovRow {
    pub fn relative_error(&self) -> f64 {
        (self.ratio / self.target - 1.0).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovTable {
    pub rows: Vec<KolmogorovRow>,
    /// Whether `|ratio / target - 1|` is non-increasing down the table.
    pub monotone: bool,
}

/// `eta_t^{-1} P_mu(||X_t|| != 0)` against its limit `mu(phi)`.
pub fn kolmogorov_table(model: &CriticalModel, mu: &InitialMeasure, times: &[f64], opts: &SolverOptions) -> Result<KolmogorovTable> {
    check_len("initial measure", model.dim(), mu.masses().len())?;
    if mu.is_trivial() {
        return Err(Error::Invalid("initial measure is trivial".into()));
    }
    let target = mu.integrate(model.phi());
    // one integration per row, so each entry is independent of the rest of the grid
    let rows = times
        .par_iter()
        .map(|&t| {
            let curve = solve_extinction(model, &[t], opts)?;
            let survival = survival_from_cumulant(mu, curve.at(0));
            let e = eta(model, t)?;
            Ok(KolmogorovRow {
                t,
                survival,
                eta: e,
                ratio: survival / e,
                target,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| w[1].relative_error() <= w[0].relative_error());
    Ok(KolmogorovTable { rows, monotone })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YaglomRow {
    pub theta: f64,
    /// `G(theta)`.
    pub limit: f64,
    /// `sup_x |g(T, theta, x) - G(theta)|`.
    pub sup_error: f64,
}

/// Yaglom surface at horizon `horizon` against the closed-form limit over a `theta` grid.
pub fn yaglom_table(model: &CriticalModel, f: &Field, thetas: &[f64], horizon: f64, opts: &SolverOptions) -> Result<Vec<YaglomRow>> {
    thetas
        .iter()
        .map(|&theta| {
            let g = yaglom_surface(model, f, theta, horizon, opts)?;
            let limit = g_closed(model.gamma0(), theta);
            let sup_error = g.values().iter().map(|v| (v - limit).abs()).fold(0.0, f64::max);
            Ok(YaglomRow { theta, limit, sup_error })
        })
        .collect()
}

/// Largest row error of a Yaglom table.
pub fn yaglom_sup_error(rows: &[YaglomRow]) -> f64 {
    rows.iter().map(|r| r.sup_error).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureRow {
    pub t: f64,
    /// `int t^alpha(x) rho(dx) / (rho{alpha = alpha_0} t^alpha_0)`.
    pub ratio: f64,
}

/// Small-`t` mixture of powers against its dominant term, with `alpha_0`
/// the smallest index charged by `rho`.
pub fn mixture_rv_check(alpha: &Field, rho: &InitialMeasure, times: &[f64]) -> Result<Vec<MixtureRow>> {
    check_len("mixture weights", alpha.len(), rho.masses().len())?;
    if times.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::Invalid("mixture grid must be finite and positive".into()));
    }
    let charged = || alpha.values().iter().zip(rho.masses()).filter(|(_, r)| **r > 0.0);
    let alpha0 = charged().map(|(a, _)| *a).fold(f64::INFINITY, f64::min);
    let dominant: f64 = charged().filter(|(a, _)| **a - alpha0 <= INDEX_TIE_TOL).map(|(_, r)| r).sum();
    if !(dominant > 0.0) {
        return Err(Error::Invalid("no mass on the minimal index".into()));
    }
    Ok(times
        .iter()
        .map(|&t| {
            // factor out t^alpha_0 so the dominant term is exactly 1
            let rest: f64 = charged()
                .filter(|(a, _)| **a - alpha0 > INDEX_TIE_TOL)
                .map(|(a, r)| r * t.powf(a - alpha0))
                .sum();
            MixtureRow {
                t,
                ratio: 1.0 + rest / dominant,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests;
