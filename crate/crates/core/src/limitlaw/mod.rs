//! The Yaglom limit law: its Laplace transform, the closed-form `G`, the
//! delay equation characterizing `G`, and a small-`u` mean diagnostic.

mod delay;

pub use delay::{inner_integral, solve_delay_equation, DelayEquationProblem, DelaySolution, PICARD_CAP};

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bound on `alpha * mixing_ratio` over all `alpha` in `(0, 1)`; the supremum
/// is about 1.0988, attained near `alpha = 0.875`.
const MIXING_BOUND: f64 = 1.125;

/// Law with Laplace transform `1 - (1 + u^{-alpha})^{-1/alpha}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZolotarevLaw {
    alpha: f64,
}

impl ZolotarevLaw {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Invalid(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    /// The law attached to a model with smallest stable index `gamma0`.
    pub fn from_gamma0(gamma0: f64) -> Result<Self> {
        Self::new(gamma0 - 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// One draw from the law.
    ///
    /// The transform is completely monotone in the sense that
    /// `(1 - laplace(u)) / u = int rho(ds) / (u + s)` with
    /// `rho(s) = Im[(1 + s^alpha e^{i pi alpha})^{-1/alpha}] / -pi`, so the law
    /// is `E / Sigma` with `E ~ Exp(1)` and `Sigma ~ rho`. Writing
    /// `s^alpha = sin(phi) / sin(pi alpha - phi)`, the density of `phi` on
    /// `(0, pi alpha)` is `mixing_ratio(phi) / (pi alpha)` and the ratio is
    /// bounded by `1 / alpha`, so `phi` is drawn by rejection from the uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e = -(1.0 - rng.gen::<f64>()).ln();
        let a = self.alpha;
        if a == 1.0 {
            return e;
        }
        let span = PI * a;
        loop {
            let phi = span * rng.gen::<f64>();
            if phi <= 0.0 {
                continue;
            }
            if MIXING_BOUND * rng.gen::<f64>() <= a * self.mixing_ratio(phi) {
                return e * ((span - phi).sin() / phi.sin()).powf(1.0 / a);
            }
        }
    }

    /// Density of the mixing angle relative to the uniform density on `(0, pi alpha)`.
    pub fn mixing_ratio(&self, phi: f64) -> f64 {
        let a = self.alpha;
        let span = PI * a;
        (phi.sin() / span.sin()).powf(1.0 / a - 1.0) * (phi / a).sin() / (span - phi).sin()
    }

    /// `(1 + u^alpha)^{-1/alpha}`, which equals `(1 - laplace(u)) / u`.
    fn tail_quotient(&self, u: f64) -> f64 {
        (-(u.powf(self.alpha)).ln_1p() / self.alpha).exp()
    }
}

/// `1 - (1 + u^{-alpha})^{-1/alpha}`, equal to 1 at `u = 0`.
pub fn laplace(law: &ZolotarevLaw, u: f64) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    if u.is_infinite() {
        return 0.0;
    }
    1.0 - u * law.tail_quotient(u)
}

/// `G(theta) = (1 + theta^{-(gamma0 - 1)})^{-1/(gamma0 - 1)}`, with `G(0) = 0`.
pub fn g_closed(gamma0: f64, theta: f64) -> f64 {
    if theta <= 0.0 {
        return 0.0;
    }
    if theta.is_infinite() {
        return 1.0;
    }
    let b = gamma0 - 1.0;
    // theta (1 + theta^b)^{-1/b}
    theta * (-(theta.powf(b)).ln_1p() / b).exp()
}

/// Right derivative `-d/du laplace` at 0.
///
/// `(1 - laplace(u)) / u = (1 + w)^{-1/alpha}` with `w = u^alpha`, so the
/// quotient is sampled at `w` in `{1e-4, 1e-5, 1e-6}` and extrapolated to
/// `w = 0` by the quadratic through the three points.
pub fn mean_diagnostic(law: &ZolotarevLaw) -> f64 {
    let ws = [1e-4f64, 1e-5, 1e-6];
    let qs: Vec<f64> = ws.iter().map(|w| law.tail_quotient(w.powf(1.0 / law.alpha))).collect();
    // Lagrange interpolant at 0
    let mut value = 0.0;
    for i in 0..3 {
        let mut l = 1.0;
        for j in 0..3 {
            if j != i {
                l *= (0.0 - ws[j]) / (ws[i] - ws[j]);
            }
        }
        value += l * qs[i];
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exponential_case() {
        let law = ZolotarevLaw::new(1.0).unwrap();
        for u in [0.0, 0.1, 1.0, 3.5, 100.0] {
            assert!((laplace(&law, u) - 1.0 / (1.0 + u)).abs() < 1e-15);
        }
        assert!((laplace(&ZolotarevLaw::new(0.5).unwrap(), 1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn closed_form_values() {
        assert!((g_closed(1.5, 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(g_closed(1.5, 0.0), 0.0);
        // G(1e8) = (1 + 1e-4)^{-2}, still 2e-4 below the limit
        assert!((g_closed(1.5, 1e8) - 1.0 / (1.0f64 + 1e-4).powi(2)).abs() < 1e-13);
        assert!((g_closed(1.5, 1e14) - 1.0).abs() < 1e-6);
        assert!((g_closed(1.2, 1.0) - 1.0 / 32.0).abs() < 1e-16);
    }

    #[test]
    fn complementarity_identity() {
        for gamma0 in [1.2, 1.5, 1.8] {
            let law = ZolotarevLaw::from_gamma0(gamma0).unwrap();
            for k in 0..1000 {
                let theta = 10f64.powf(-4.0 + 8.0 * k as f64 / 999.0);
                let s = g_closed(gamma0, theta) + laplace(&law, theta);
                assert!((s - 1.0).abs() <= 1e-14, "gamma0={gamma0} theta={theta}: {s}");
            }
        }
    }

    #[test]
    fn mean_is_one() {
        for alpha in [0.05, 0.2, 0.5, 0.9, 1.0] {
            let m = mean_diagnostic(&ZolotarevLaw::new(alpha).unwrap());
            assert!((m - 1.0).abs() < 1e-3, "alpha={alpha}: {m}");
        }
    }

    #[test]
    fn complete_monotonicity_signs() {
        for alpha in [0.2, 0.5, 0.8, 1.0] {
            let law = ZolotarevLaw::new(alpha).unwrap();
            let h = 0.05;
            let vals: Vec<f64> = (0..200).map(|i| laplace(&law, 0.1 + h * i as f64)).collect();
            let mut diff = vals;
            for order in 1..=3 {
                diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
                let sign = if order % 2 == 1 { -1.0 } else { 1.0 };
                assert!(diff.iter().all(|d| sign * d > 0.0), "alpha={alpha} order={order}");
            }
        }
    }

    #[test]
    fn mixing_angle_density() {
        let rule = crate::quad::GaussLegendre::new(64);
        for alpha in [0.05, 0.2, 0.5, 0.8, 0.95] {
            let law = ZolotarevLaw::new(alpha).unwrap();
            let span = PI * alpha;
            let mut total = 0.0;
            for k in 0..64 {
                let (a, b) = (span * k as f64 / 64.0, span * (k + 1) as f64 / 64.0);
                total += rule.integrate(a, b, |p| law.mixing_ratio(p)) / span;
            }
            assert!((total - 1.0).abs() < 1e-10, "alpha={alpha}: {total}");
        }
        for i in 1..200 {
            let alpha = i as f64 / 200.0;
            let law = ZolotarevLaw::new(alpha).unwrap();
            let span = PI * alpha;
            for k in 1..2000 {
                let r = alpha * law.mixing_ratio(span * k as f64 / 2000.0);
                assert!(r <= MIXING_BOUND, "alpha={alpha} k={k}: {r}");
            }
        }
    }

    #[test]
    fn samples_match_transform() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for alpha in [0.2, 0.5, 0.8, 1.0] {
            let law = ZolotarevLaw::new(alpha).unwrap();
            let n = 200_000;
            let draws: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            assert!(draws.iter().all(|w| *w > 0.0 && w.is_finite()));
            for u in [0.1, 1.0, 10.0] {
                let vals: Vec<f64> = draws.iter().map(|w| (-u * w).exp()).collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                let exact = laplace(&law, u);
                assert!((mean - exact).abs() <= 4.0 * se, "alpha={alpha} u={u}: {mean} vs {exact} (se {se})");
            }
        }
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(ZolotarevLaw::new(0.0).is_err());
        assert!(ZolotarevLaw::new(1.5).is_err());
    }

    proptest! {
        #[test]
        fn monotone_transform_and_g(alpha in 0.05f64..1.0, u in 1e-3f64..50.0, du in 1e-3f64..5.0) {
            let law = ZolotarevLaw::new(alpha).unwrap();
            prop_assert!(laplace(&law, u + du) < laplace(&law, u));
            let g0 = 1.0 + alpha;
            prop_assert!(g_closed(g0, u + du) > g_closed(g0, u));
            prop_assert!(g_closed(g0, u) <= u);
        }
    }
}
