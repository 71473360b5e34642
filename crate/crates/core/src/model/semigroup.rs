use nalgebra::{DMatrix, DVector};

use super::{CriticalModel, Field};
use crate::error::{check_len, Error, Result};

/// `exp(tA)`, the matrix of the mean semigroup acting on functions.
pub fn transition_matrix(model: &CriticalModel, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Invalid(format!("semigroup time must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        let d = model.dim();
        return Ok(DMatrix::identity(d, d));
    }
    Ok((model.generator() * t).exp())
}

/// `P^beta_t f = exp(tA) f`.
pub fn semigroup_apply(model: &CriticalModel, t: f64, f: &Field) -> Result<Field> {
    check_len("field", model.dim(), f.len())?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let p = transition_matrix(model, t)?;
    let out = p * DVector::from_column_slice(f.values());
    Ok(Field(out.iter().copied().collect()))
}

/// `sup_{x,y} | p^beta_t(x,y) / (phi(x) phi*(y)) - 1 |`, with the density
/// taken against `m`.
pub fn uniform_mixing_gap(model: &CriticalModel, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Invalid(format!("mixing gap requires t > 0, got {t}")));
    }
    let p = transition_matrix(model, t)?;
    let (phi, phi_star, m) = (model.phi(), model.phi_star(), model.weights());
    let d = model.dim();
    let mut gap = 0.0f64;
    for x in 0..d {
        for y in 0..d {
            let density = p[(x, y)] / m[y];
            gap = gap.max((density / (phi[x] * phi_star[y]) - 1.0).abs());
        }
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{calibrate_critical, BranchingMechanism, MotionGenerator, StateSpace};
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};

    fn sym2() -> CriticalModel {
        let motion = MotionGenerator::new(StateSpace::counting(2).unwrap(), dmatrix![-1.0, 1.0; 1.0, -1.0]).unwrap();
        let mech = BranchingMechanism::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.2, 1.8]).unwrap();
        calibrate_critical(&motion, &mech).unwrap()
    }

    fn asym3() -> CriticalModel {
        let motion = MotionGenerator::new(
            StateSpace::new(vec![1.0, 0.5, 2.0]).unwrap(),
            dmatrix![-2.0, 1.5, 0.5; 0.5, -1.0, 0.5; 1.0, 1.0, -2.5],
        )
        .unwrap();
        let mech = BranchingMechanism::new(vec![0.2, -0.1, 0.4], vec![1.0, 0.5, 2.0], vec![1.3, 1.3, 1.7]).unwrap();
        calibrate_critical(&motion, &mech).unwrap()
    }

    #[test]
    fn identity_at_zero_and_phi_invariant() {
        for model in [sym2(), asym3()] {
            let f = Field(vec![0.3; model.dim()]);
            assert_eq!(semigroup_apply(&model, 0.0, &f).unwrap(), f);
            let phi = Field(model.phi().to_vec());
            for t in [0.1, 1.0, 10.0] {
                let out = semigroup_apply(&model, t, &phi).unwrap();
                for (a, b) in out.values().iter().zip(model.phi()) {
                    assert!((a - b).abs() <= 1e-10 * b.abs(), "t={t}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn matches_taylor_series() {
        let model = sym2();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let f: Vec<f64> = (0..2).map(|_| rng.gen_range(0.0..2.0)).collect();
        let a = model.generator().clone();
        // sum_k A^k f / k!
        let mut term = DVector::from_vec(f.clone());
        let mut sum = term.clone();
        for k in 1..60 {
            term = &a * term / k as f64;
            sum += &term;
        }
        let out = semigroup_apply(&model, 1.0, &Field(f)).unwrap();
        for (x, y) in out.values().iter().zip(sum.iter()) {
            assert!((x - y).abs() <= 1e-10 * y.abs());
        }
    }

    #[test]
    fn strictly_positive_kernel() {
        let model = asym3();
        for t in [1e-3, 0.1, 1.0, 10.0] {
            let p = transition_matrix(&model, t).unwrap();
            assert!(p.iter().all(|v| *v > 0.0), "t={t}");
        }
    }

    #[test]
    fn scalar_gap_vanishes() {
        let motion = MotionGenerator::new(StateSpace::counting(1).unwrap(), dmatrix![0.0]).unwrap();
        let mech = BranchingMechanism::new(vec![0.4], vec![1.0], vec![1.5]).unwrap();
        let model = calibrate_critical(&motion, &mech).unwrap();
        for t in [0.5, 5.0, 50.0] {
            assert!(uniform_mixing_gap(&model, t).unwrap() < 1e-14);
        }
        assert!(uniform_mixing_gap(&model, 0.0).is_err());
    }

    #[test]
    fn symmetric_gap_closed_form() {
        // exp(tA) = 1/2 [[1+e, 1-e],[1-e, 1+e]] with e = exp(-2t); phi phi* = 1/2
        let model = sym2();
        let mut prev = f64::INFINITY;
        for k in 1..=20 {
            let t = 0.5 * k as f64;
            let g = uniform_mixing_gap(&model, t).unwrap();
            let exact = (-2.0 * t).exp();
            assert!((g - exact).abs() < 1e-10 * exact + 1e-14, "t={t}: {g} vs {exact}");
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn gap_is_asymptotically_exponential() {
        let model = asym3();
        let ts: Vec<f64> = (0..=20).map(|k| 2.0 + 0.5 * k as f64).collect();
        let logs: Vec<f64> = ts.iter().map(|&t| uniform_mixing_gap(&model, t).unwrap().ln()).collect();
        let n = ts.len() as f64;
        let mt = ts.iter().sum::<f64>() / n;
        let ml = logs.iter().sum::<f64>() / n;
        let sxy: f64 = ts.iter().zip(&logs).map(|(t, l)| (t - mt) * (l - ml)).sum();
        let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
        let syy: f64 = logs.iter().map(|l| (l - ml).powi(2)).sum();
        let slope = sxy / sxx;
        let r2 = sxy * sxy / (sxx * syy);
        assert!(slope < 0.0);
        assert!(r2 >= 0.999, "r2 = {r2}");
        // halving property past the crossover
        for &t in &[2.0, 4.0, 8.0] {
            assert!(uniform_mixing_gap(&model, 2.0 * t).unwrap() <= uniform_mixing_gap(&model, t).unwrap());
        }
    }
}
