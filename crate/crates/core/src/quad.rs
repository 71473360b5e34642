//! Quadrature helpers: Gauss–Legendre rules, Legendre-series antiderivatives
//! on a single cell, and adaptive Simpson.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `P_n` from Chebyshev initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Polynomial interpolant of samples taken at the Gauss nodes of one cell,
/// stored as Legendre coefficients so that partial integrals are exact.
#[derive(Debug, Clone)]
pub struct LegendreCell {
    coeffs: Vec<f64>,
}

impl LegendreCell {
    pub fn from_samples(rule: &GaussLegendre, samples: &[f64]) -> Self {
        let n = rule.len();
        debug_assert_eq!(samples.len(), n);
        let mut coeffs = vec![0.0; n];
        for (j, (&x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            let fw = samples[j] * w;
            let mut p0 = 1.0;
            let mut p1 = x;
            coeffs[0] += fw;
            if n > 1 {
                coeffs[1] += fw * p1;
            }
            for (k, c) in coeffs.iter_mut().enumerate().skip(2) {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                *c += fw * p2;
                p0 = p1;
                p1 = p2;
            }
        }
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= (2.0 * k as f64 + 1.0) / 2.0;
        }
        Self { coeffs }
    }

    /// `∫_{-1}^{x} p(s) ds` for `x` in `[-1, 1]` (reference coordinates).
    pub fn integral_from_left(&self, x: f64) -> f64 {
        let n = self.coeffs.len();
        // P_0 .. P_n at x
        let mut p = Vec::with_capacity(n + 1);
        p.push(1.0);
        p.push(x);
        for k in 2..=n {
            let kf = k as f64;
            let next = ((2.0 * kf - 1.0) * x * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
            p.push(next);
        }
        let mut total = self.coeffs[0] * (x + 1.0);
        for k in 1..n {
            total += self.coeffs[k] * (p[k + 1] - p[k - 1]) / (2.0 * k as f64 + 1.0);
        }
        total
    }

    pub fn value(&self, x: f64) -> f64 {
        let mut p0 = 1.0;
        let mut p1 = x;
        let mut total = self.coeffs[0];
        if self.coeffs.len() > 1 {
            total += self.coeffs[1] * x;
        }
        for (k, c) in self.coeffs.iter().enumerate().skip(2) {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            total += c * p2;
            p0 = p1;
            p1 = p2;
        }
        total
    }
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&mut f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(16);
        let w: f64 = rule.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
        // degree 31 is the limit for 16 nodes
        let v = rule.integrate(0.0, 1.0, |x| x.powi(31));
        assert!((v - 1.0 / 32.0).abs() < 1e-14);
    }

    #[test]
    fn small_rules_match_known_nodes() {
        let r2 = GaussLegendre::new(2);
        assert!((r2.nodes[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let r1 = GaussLegendre::new(1);
        assert_eq!(r1.nodes[0], 0.0);
        assert!((r1.weights[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn legendre_cell_partial_integral() {
        let rule = GaussLegendre::new(8);
        let samples: Vec<f64> = rule.nodes.iter().map(|x| x.powi(3) + 2.0 * x).collect();
        let cell = LegendreCell::from_samples(&rule, &samples);
        // ∫_{-1}^{x} s^3 + 2 s ds = x^4/4 + x^2 - 5/4
        for &x in &[-1.0f64, -0.3, 0.2, 0.9, 1.0] {
            let exact = x.powi(4) / 4.0 + x * x - 1.25;
            assert!((cell.integral_from_left(x) - exact).abs() < 1e-14);
            assert!((cell.value(x) - (x.powi(3) + 2.0 * x)).abs() < 1e-13);
        }
    }

    #[test]
    fn simpson_handles_smooth_and_sqrt() {
        let v = adaptive_simpson(|x| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
        let s = adaptive_simpson(|x| x.sqrt(), 0.0, 1.0, 1e-10);
        assert!((s - 2.0 / 3.0).abs() < 1e-8);
    }
}
