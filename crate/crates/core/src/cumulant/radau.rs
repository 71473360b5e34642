//! Three-stage Radau IIA (order 5, stiffly accurate, L-stable) with
//! simplified Newton iteration and Hairer's embedded error estimate.

use nalgebra::{DMatrix, DVector};

use super::rk::System;

const SQ6: f64 = 2.449_489_742_783_178;
pub(super) const C1: f64 = (4.0 - SQ6) / 10.0;
pub(super) const C2: f64 = (4.0 + SQ6) / 10.0;
const A: [[f64; 3]; 3] = [
    [(88.0 - 7.0 * SQ6) / 360.0, (296.0 - 169.0 * SQ6) / 1800.0, (-2.0 + 3.0 * SQ6) / 225.0],
    [(296.0 + 169.0 * SQ6) / 1800.0, (88.0 + 7.0 * SQ6) / 360.0, (-2.0 - 3.0 * SQ6) / 225.0],
    [(16.0 - SQ6) / 36.0, (16.0 + SQ6) / 36.0, 1.0 / 9.0],
];
const DD: [f64; 3] = [-(13.0 + 7.0 * SQ6) / 3.0, (-13.0 + 7.0 * SQ6) / 3.0, -1.0 / 3.0];
const NEWTON_MAX: usize = 10;
/// Newton stops once the scaled increment falls below this fraction of the tolerance.
const NEWTON_TOL: f64 = 1e-2;

pub(super) struct RadauStep {
    pub y1: Vec<f64>,
    /// Stage increments `Y_i - y0`.
    pub z: [Vec<f64>; 3],
    pub err: f64,
}

/// Weighted RMS norm with scale `abs_tol + rel_tol |y|`.
fn scaled_rms(v: &[f64], y: &[f64], rel_tol: f64, abs_tol: f64) -> f64 {
    let sq: f64 = v
        .iter()
        .zip(y)
        .map(|(e, y)| (e / (abs_tol + rel_tol * y.abs()).max(f64::MIN_POSITIVE)).powi(2))
        .sum();
    (sq / v.len() as f64).sqrt()
}

/// One step of size `h` from `y` (with `f0 = F(y)`); `None` if Newton fails.
pub(super) fn radau_step<S: System>(sys: &S, y: &[f64], f0: &[f64], h: f64, rel_tol: f64, abs_tol: f64) -> Option<RadauStep> {
    let n = y.len();
    let mut jac = DMatrix::<f64>::zeros(n, n);
    sys.jacobian(y, &mut jac);
    let mut m = DMatrix::<f64>::identity(3 * n, 3 * n);
    for i in 0..3 {
        for j in 0..3 {
            let block = &jac * (-h * A[i][j]);
            let mut view = m.view_mut((i * n, j * n), (n, n));
            view += block;
        }
    }
    let lu = m.lu();
    let mut z = DVector::<f64>::zeros(3 * n);
    let mut stage = vec![0.0; n];
    let mut fz = vec![vec![0.0; n]; 3];
    let mut converged = false;
    for _ in 0..NEWTON_MAX {
        for (s, f) in fz.iter_mut().enumerate() {
            for i in 0..n {
                stage[i] = y[i] + z[s * n + i];
            }
            sys.eval(&stage, f);
        }
        let mut g = DVector::<f64>::zeros(3 * n);
        for s in 0..3 {
            for i in 0..n {
                let af: f64 = (0..3).map(|j| A[s][j] * fz[j][i]).sum();
                g[s * n + i] = -(z[s * n + i] - h * af);
            }
        }
        let dz = lu.solve(&g)?;
        if dz.iter().any(|v| !v.is_finite()) {
            return None;
        }
        z += &dz;
        let mut worst = 0.0f64;
        for s in 0..3 {
            worst = worst.max(scaled_rms(&dz.as_slice()[s * n..(s + 1) * n], y, rel_tol, abs_tol));
        }
        if worst < NEWTON_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let zs: [Vec<f64>; 3] = [0, 1, 2].map(|s| z.as_slice()[s * n..(s + 1) * n].to_vec());
    let y1: Vec<f64> = (0..n).map(|i| y[i] + zs[2][i]).collect();

    // err = h g0 (I - h g0 J)^{-1} (f0 + sum_i DD_i Z_i / h)
    let g0 = (6.0 + 81f64.cbrt() - 9f64.cbrt()) / 30.0;
    let mut e1 = DMatrix::<f64>::identity(n, n);
    e1 -= &jac * (h * g0);
    let rhs = DVector::from_iterator(
        n,
        (0..n).map(|i| h * g0 * (f0[i] + (DD[0] * zs[0][i] + DD[1] * zs[1][i] + DD[2] * zs[2][i]) / h)),
    );
    let est = e1.lu().solve(&rhs)?;
    let scale: Vec<f64> = (0..n).map(|i| y[i].abs().max(y1[i].abs())).collect();
    let err = scaled_rms(est.as_slice(), &scale, rel_tol, abs_tol);
    Some(RadauStep { y1, z: zs, err: if err.is_finite() { err } else { f64::INFINITY } })
}

/// Collocation polynomial through `(0, 0)` and `(c_i, Z_i)` at `s` in `[0, 1]`.
pub(super) fn collocation(z: &[Vec<f64>; 3], s: f64, y0: &[f64], out: &mut [f64]) {
    let c = [C1, C2, 1.0];
    let mut l = [0.0; 3];
    for i in 0..3 {
        // Lagrange basis on {0, c1, c2, 1}; the node at 0 carries zero
        let mut v = s / c[i];
        for j in 0..3 {
            if j != i {
                v *= (s - c[j]) / (c[i] - c[j]);
            }
        }
        l[i] = v;
    }
    for k in 0..out.len() {
        out[k] = y0[k] + l[0] * z[0][k] + l[1] * z[1][k] + l[2] * z[2][k];
    }
}
