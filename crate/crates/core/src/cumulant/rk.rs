//! Dormand–Prince 5(4) with the standard 4th-order continuous extension,
//! plus a Radau IIA fallback for runs that keep rejecting steps or are
//! flagged stiff by the Dormand–Prince stiffness test.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

use super::radau;
use super::SolverOptions;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const MAX_STEPS: usize = 50_000_000;
/// `h |lambda|` beyond which a Dormand–Prince step counts as stiff.
const STIFF_BOUND: f64 = 3.25;
const STIFF_HITS: usize = 15;

/// Autonomous right-hand side `y' = F(y)` with its Jacobian.
pub(crate) trait System {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[f64], dy: &mut [f64]);
    fn jacobian(&self, y: &[f64], jac: &mut DMatrix<f64>);
}

/// Interpolant of one accepted step.
#[derive(Debug, Clone)]
pub(crate) enum Segment {
    Dopri { t0: f64, h: f64, rcont: [Vec<f64>; 5] },
    Collocation { t0: f64, h: f64, y0: Vec<f64>, z: [Vec<f64>; 3] },
}

impl Segment {
    fn span(&self) -> (f64, f64) {
        match self {
            Segment::Dopri { t0, h, .. } | Segment::Collocation { t0, h, .. } => (*t0, *h),
        }
    }

    pub(crate) fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            Segment::Dopri { t0, h, rcont } => {
                let s = (t - t0) / h;
                let s1 = 1.0 - s;
                for i in 0..out.len() {
                    out[i] = rcont[0][i]
                        + s * (rcont[1][i] + s1 * (rcont[2][i] + s * (rcont[3][i] + s1 * rcont[4][i])));
                }
            }
            Segment::Collocation { t0, h, y0, z } => radau::collocation(z, (t - t0) / h, y0, out),
        }
    }
}

/// Continuous extension over the whole integration interval.
#[derive(Debug, Clone, Default)]
pub struct DenseSolution {
    pub(crate) segments: Vec<Segment>,
    pub(crate) start: f64,
    pub(crate) end: f64,
    pub(crate) start_value: Vec<f64>,
}

impl DenseSolution {
    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Step boundaries of the underlying integration, including both ends.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![self.start];
        b.extend(self.segments.iter().map(|s| {
            let (t0, h) = s.span();
            t0 + h
        }));
        b
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.segments.is_empty() || t <= self.start {
            out.copy_from_slice(&self.start_value);
            return;
        }
        let k = self
            .segments
            .partition_point(|s| {
                let (t0, h) = s.span();
                t0 + h < t
            })
            .min(self.segments.len() - 1);
        self.segments[k].eval_into(t, out);
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.start_value.len()];
        self.eval_into(t, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverReport {
    pub accepted: usize,
    pub rejected: usize,
    pub fallback_steps: usize,
    /// Largest normalized local error estimate among accepted steps.
    pub max_residual: f64,
}

pub(crate) struct Integration {
    pub outputs: Vec<Vec<f64>>,
    pub dense: Option<DenseSolution>,
    pub report: SolverReport,
}

/// Integrate `sys` from `(t0, y0)` to the last of `out_times` (sorted,
/// all `>= t0`). With `abs_control` the absolute tolerance is taken relative
/// to the sup norm of the current state; without it error control is purely
/// relative.
pub(crate) fn integrate<S: System>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    out_times: &[f64],
    opts: &SolverOptions,
    abs_control: bool,
    keep_dense: bool,
) -> Result<Integration> {
    let n = sys.dim();
    let t_end = out_times.last().copied().unwrap_or(t0).max(t0);
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let abs_factor = if abs_control { opts.abs_tol } else { 0.0 };
    let mut abs_tol = abs_factor * sup(y0);
    let mut report = SolverReport::default();
    let mut outputs = Vec::with_capacity(out_times.len());
    let mut next_out = 0;
    while next_out < out_times.len() && out_times[next_out] <= t0 {
        outputs.push(y0.to_vec());
        next_out += 1;
    }
    let mut dense = keep_dense.then(|| DenseSolution {
        segments: Vec::new(),
        start: t0,
        end: t_end,
        start_value: y0.to_vec(),
    });
    if t_end <= t0 || next_out == out_times.len() && !keep_dense {
        return Ok(Integration { outputs, dense, report });
    }

    // elapsed time is tracked apart from t0 so steps far below ulp(t0) still advance
    let span = t_end - t0;
    let mut tau = 0.0f64;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    sys.eval(&y, &mut k1);
    let mut k = [(); 6].map(|_| vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let max_step = opts.max_step.min(span);
    let mut h = initial_step(sys, &y, &k1, opts, abs_tol).min(max_step);
    let mut use_fallback = opts.force_implicit;
    let mut stiff_hits = 0usize;
    let mut calm = 0usize;
    let mut steps = 0usize;

    while tau < span {
        let t = t0 + tau;
        abs_tol = abs_factor * sup(&y);
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StepUnderflow { t, h });
        }
        if !use_fallback && (report.rejected > opts.fallback_after_rejections || stiff_hits >= STIFF_HITS) {
            log::debug!("switching to implicit Radau fallback at t = {t:e}");
            use_fallback = true;
        }
        let last = tau + h >= span;
        if last {
            h = span - tau;
        }
        if !(h > 0.0) || h < 1e-15 * tau {
            return Err(Error::StepUnderflow { t, h });
        }

        if use_fallback {
            let step = radau::radau_step(sys, &y, &k1, h, opts.rel_tol, abs_tol);
            let Some(step) = step else {
                report.rejected += 1;
                h *= 0.25;
                continue;
            };
            let err_norm = step.err;
            let negative = step.y1.iter().any(|v| *v < -abs_tol);
            if err_norm <= 1.0 && !negative {
                let seg = Segment::Collocation { t0: t, h, y0: y.clone(), z: step.z };
                emit(&seg, t + h, out_times, &mut next_out, &mut outputs, n, last);
                if let Some(d) = dense.as_mut() {
                    d.segments.push(seg);
                }
                report.accepted += 1;
                report.fallback_steps += 1;
                report.max_residual = report.max_residual.max(err_norm);
                tau = if last { span } else { tau + h };
                y = step.y1;
                y.iter_mut().for_each(|v| *v = v.max(0.0));
                sys.eval(&y, &mut k1);
                let fac = if err_norm == 0.0 { FAC_MAX } else { (SAFETY * err_norm.powf(-0.25)).clamp(FAC_MIN, FAC_MAX) };
                h = (h * fac).min(max_step);
            } else {
                report.rejected += 1;
                h *= if negative { 0.5 } else { (SAFETY * err_norm.powf(-0.25)).clamp(FAC_MIN, 1.0) };
            }
            continue;
        }

        // stages
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.eval(&ytmp, &mut k[1]);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k[1][i]);
        }
        sys.eval(&ytmp, &mut k[2]);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        sys.eval(&ytmp, &mut k[3]);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        sys.eval(&ytmp, &mut k[4]);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
        }
        sys.eval(&ytmp, &mut k[5]);
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        sys.eval(&ynew, &mut k7);
        let mut sq = 0.0;
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k7[i]);
            let sc = (abs_tol + opts.rel_tol * y[i].abs().max(ynew[i].abs())).max(f64::MIN_POSITIVE);
            sq += (err[i] / sc).powi(2);
        }
        let err_norm = (sq / n as f64).sqrt();
        let negative = ynew.iter().position(|v| *v < -abs_tol);
        if !err_norm.is_finite() {
            report.rejected += 1;
            h *= FAC_MIN;
            continue;
        }
        if err_norm <= 1.0 && negative.is_none() {
            let seg = if keep_dense || next_out < out_times.len() && out_times[next_out] <= t + h {
                let mut rcont: [Vec<f64>; 5] = [(); 5].map(|_| vec![0.0; n]);
                for i in 0..n {
                    let dy = ynew[i] - y[i];
                    let bspl = h * k1[i] - dy;
                    rcont[0][i] = y[i];
                    rcont[1][i] = dy;
                    rcont[2][i] = bspl;
                    rcont[3][i] = dy - h * k7[i] - bspl;
                    rcont[4][i] = h
                        * (D1 * k1[i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k7[i]);
                }
                Some(Segment::Dopri { t0: t, h, rcont })
            } else {
                None
            };
            if let Some(seg) = seg {
                emit(&seg, t + h, out_times, &mut next_out, &mut outputs, n, last);
                if let Some(d) = dense.as_mut() {
                    d.segments.push(seg);
                }
            }
            report.accepted += 1;
            report.max_residual = report.max_residual.max(err_norm);
            // Hairer's estimate of h |lambda| from the last two stages
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..n {
                num += (k7[i] - k[5][i]).powi(2);
                den += (ynew[i] - ytmp[i]).powi(2);
            }
            if den > 0.0 && h * (num / den).sqrt() > STIFF_BOUND {
                stiff_hits += 1;
                calm = 0;
            } else {
                calm += 1;
                if calm >= 6 {
                    stiff_hits = 0;
                }
            }
            tau = if last { span } else { tau + h };
            for i in 0..n {
                y[i] = ynew[i].max(0.0);
            }
            if ynew.iter().any(|v| *v < 0.0) {
                sys.eval(&y, &mut k1);
            } else {
                k1.copy_from_slice(&k7);
            }
            let fac = if err_norm == 0.0 { FAC_MAX } else { (SAFETY * err_norm.powf(-0.2)).clamp(FAC_MIN, FAC_MAX) };
            h = (h * fac).min(max_step);
        } else {
            report.rejected += 1;
            if let Some(site) = negative {
                if h < 1e-12 * t.abs().max(1e-300) {
                    return Err(Error::NegativeExcursion { site, t, value: ynew[site] });
                }
                h *= 0.5;
            } else {
                h *= (SAFETY * err_norm.powf(-0.2)).clamp(FAC_MIN, 1.0);
            }
        }
    }
    // remaining outputs at t_end (rounding)
    while outputs.len() < out_times.len() {
        outputs.push(y.clone());
    }
    if let Some(d) = dense.as_mut() {
        d.end = t_end;
    }
    Ok(Integration { outputs, dense, report })
}

fn emit(
    seg: &Segment,
    t_next: f64,
    out_times: &[f64],
    next_out: &mut usize,
    outputs: &mut Vec<Vec<f64>>,
    n: usize,
    last: bool,
) {
    while *next_out < out_times.len() && (out_times[*next_out] <= t_next || last) {
        let mut v = vec![0.0; n];
        seg.eval_into(out_times[*next_out].min(t_next), &mut v);
        v.iter_mut().for_each(|x| *x = x.max(0.0));
        outputs.push(v);
        *next_out += 1;
    }
}

fn initial_step<S: System>(sys: &S, y: &[f64], f0: &[f64], opts: &SolverOptions, abs_tol: f64) -> f64 {
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| (abs_tol + opts.rel_tol * v.abs()).max(f64::MIN_POSITIVE)).collect();
    let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, f)| v + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    sys.eval(&y1, &mut f1);
    let d2 = (f1.iter().zip(f0).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() / n as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}
