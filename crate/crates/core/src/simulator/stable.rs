use std::f64::consts::FRAC_PI_2;

use rand::Rng;

/// Constants of the Chambers–Mallows–Stuck transform for a totally skewed
/// (`beta = 1`) stable law of index `gamma`, rescaled so that
/// `E[exp(-u S)] = exp(u^gamma)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StableSampler {
    gamma: f64,
    shift: f64,
    scale: f64,
}

impl StableSampler {
    pub(crate) fn new(gamma: f64) -> Self {
        let t = (std::f64::consts::PI * gamma / 2.0).tan();
        let shift = t.atan() / gamma;
        let sab = (1.0 + t * t).powf(1.0 / (2.0 * gamma));
        // sigma^gamma = |cos(pi gamma / 2)| makes the log-Laplace exactly u^gamma
        let sigma = (std::f64::consts::PI * gamma / 2.0).cos().abs().powf(1.0 / gamma);
        Self {
            gamma,
            shift,
            scale: sab * sigma,
        }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v = FRAC_PI_2 * (2.0 * rng.gen::<f64>() - 1.0);
        // Exp(1) from an open-interval uniform
        let w = -(1.0 - rng.gen::<f64>()).ln();
        let a = self.gamma;
        let arg = a * (v + self.shift);
        let head = arg.sin() / v.cos().powf(1.0 / a);
        let tail = ((v - arg).cos() / w).powf((1.0 - a) / a);
        self.scale * head * tail
    }
}
