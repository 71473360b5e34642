use super::*;
use crate::cumulant::{normalize_field, survival_probability};
use crate::model::{calibrate_critical, BranchingMechanism, MotionGenerator, StateSpace};
use nalgebra::dmatrix;
use proptest::prelude::*;

fn scalar() -> CriticalModel {
    let motion = MotionGenerator::new(StateSpace::counting(1).unwrap(), dmatrix![0.0]).unwrap();
    let mech = BranchingMechanism::new(vec![0.0], vec![1.0], vec![1.5]).unwrap();
    calibrate_critical(&motion, &mech).unwrap()
}

fn two_site() -> CriticalModel {
    let motion = MotionGenerator::new(StateSpace::counting(2).unwrap(), dmatrix![-1.0, 1.0; 1.0, -1.0]).unwrap();
    let mech = BranchingMechanism::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.2, 1.8]).unwrap();
    calibrate_critical(&motion, &mech).unwrap()
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

#[test]
fn exact_power_law_fit() {
    let times = log_grid(1.0, 1e4, 41);
    let values: Vec<f64> = times.iter().map(|t| 3.0 * t.powi(-2)).collect();
    let fit = rv_index_fit(&times, &values).unwrap();
    assert!((fit.slope + 2.0).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
    assert!(fit.stderr < 1e-12);
    assert_eq!(fit.point_count, 21);
    assert!((fit.window.0 - 1e2).abs() < 1e-9 && fit.window.1 == 1e4);
}

#[test]
fn scalar_extinction_index() {
    let model = scalar();
    let times = log_grid(1e2, 1e5, 31);
    let curve = solve_extinction(&model, &times, &SolverOptions::default()).unwrap();
    let values: Vec<f64> = curve.values.iter().map(|v| v.0[0]).collect();
    let fit = rv_index_fit(&times, &values).unwrap();
    assert!((fit.slope + 2.0).abs() < 1e-6, "{fit:?}");
}

#[test]
fn fit_rejects_bad_input() {
    assert!(rv_index_fit(&[1.0, 2.0, 3.0], &[1.0, -1.0, 1.0]).is_err());
    assert!(rv_index_fit(&[1.0, 3.0, 2.0], &[1.0, 1.0, 1.0]).is_err());
    assert!(matches!(rv_index_fit(&[1.0, 2.0], &[1.0, 1.0]), Err(Error::TooFewSamples { .. })));
    assert!(rv_index_fit(&[1.0, 2.0, 3.0], &[1.0, 1.0]).is_err());
}

#[test]
fn scalar_kolmogorov_ratio() {
    let model = scalar();
    let mu = InitialMeasure(vec![1.0]);
    let table = kolmogorov_table(&model, &mu, &[1.0, 100.0], &SolverOptions::default()).unwrap();
    let exact = |t: f64| -(-(0.5f64 * t).powi(-2)).exp_m1() / (0.5 * t).powi(-2);
    assert!((table.rows[0].ratio - exact(1.0)).abs() < 1e-8, "{:?}", table.rows[0]);
    assert!((table.rows[0].ratio - 0.24542).abs() < 1e-5);
    assert!((table.rows[1].ratio - 0.99980).abs() < 1e-5);
    assert!(table.monotone);
    assert_eq!(table.rows[1].target, 1.0);
}

#[test]
fn kolmogorov_cross_check() {
    let model = two_site();
    let mu = InitialMeasure(vec![0.3, 1.2]);
    let times = [10.0, 100.0, 1000.0];
    let opts = SolverOptions::default();
    let table = kolmogorov_table(&model, &mu, &times, &opts).unwrap();
    for row in &table.rows {
        let direct = survival_probability(&model, &mu, row.t, &opts).unwrap() / eta(&model, row.t).unwrap();
        assert!((row.ratio - direct).abs() <= 1e-14 * direct.max(1.0), "t={}: {} vs {direct}", row.t, row.ratio);
    }
    let scaled = kolmogorov_table(&model, &InitialMeasure(vec![0.6, 2.4]), &times, &opts).unwrap();
    for (a, b) in table.rows.iter().zip(&scaled.rows) {
        assert!((b.target - 2.0 * a.target).abs() < 1e-14);
    }
}

#[test]
fn scalar_yaglom_is_exact() {
    let model = scalar();
    let f = Field(vec![1.0]);
    let thetas = [0.0, 0.1, 1.0, 5.0, 10.0];
    let opts = SolverOptions::default();
    for horizon in [1.0, 10.0, 100.0] {
        let rows = yaglom_table(&model, &f, &thetas, horizon, &opts).unwrap();
        assert_eq!(rows[0].sup_error, 0.0);
        assert_eq!(rows[0].limit, 0.0);
        assert!(yaglom_sup_error(&rows) <= 10.0 * opts.rel_tol, "T={horizon}: {rows:?}");
    }
}

#[test]
fn two_site_yaglom_improves() {
    let model = two_site();
    let f = normalize_field(&model, &Field(vec![1.0, 1.0])).unwrap();
    let thetas: Vec<f64> = log_grid(0.1, 10.0, 9);
    let errs: Vec<f64> = [1e2, 1e3]
        .iter()
        .map(|&t| yaglom_sup_error(&yaglom_table(&model, &f, &thetas, t, &SolverOptions::default()).unwrap()))
        .collect();
    assert!(errs[1] < errs[0], "{errs:?}");
}

#[test]
fn mixture_closed_form() {
    let rows = mixture_rv_check(&Field(vec![1.2, 1.8]), &InitialMeasure(vec![1.0, 1.0]), &[1e-2, 1e-4, 1e-6]).unwrap();
    for r in &rows {
        assert!((r.ratio - (1.0 + r.t.powf(0.6))).abs() < 1e-15);
    }
    assert!((rows[2].ratio - (1.0 + 10f64.powf(-3.6))).abs() < 1e-9);
    assert!((rows[2].ratio - 1.000251).abs() < 5e-7);
    assert!(rows.windows(2).all(|w| w[1].ratio < w[0].ratio));
    let flat = mixture_rv_check(&Field(vec![1.5, 1.5]), &InitialMeasure(vec![2.0, 0.5]), &[1e-3, 1.0]).unwrap();
    assert!(flat.iter().all(|r| r.ratio == 1.0));
    assert!(mixture_rv_check(&Field(vec![1.5]), &InitialMeasure(vec![0.0]), &[1.0]).is_err());
}

proptest! {
    #[test]
    fn fit_recovers_any_power(slope in -5.0f64..5.0, scale in 1e-3f64..1e3) {
        let times = log_grid(1.0, 1e6, 25);
        let values: Vec<f64> = times.iter().map(|t| scale * t.powf(slope)).collect();
        let fit = rv_index_fit(&times, &values).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-12 * slope.abs().max(1.0) * 10.0);
    }

    #[test]
    fn mixture_ratio_at_least_one(a in 0.1f64..3.0, b in 0.1f64..3.0, t in 1e-8f64..1.0) {
        let rows = mixture_rv_check(&Field(vec![a, b]), &InitialMeasure(vec![1.0, 2.0]), &[t]).unwrap();
        prop_assert!(rows[0].ratio >= 1.0);
    }
}
