use nalgebra::{DMatrix, DVector};

use super::EigenData;
use crate::error::{check_len, Error, Result};

/// Largest dimension handled by the dense Schur route; above it the Perron
/// vectors come from shifted power iteration.
pub const DENSE_LIMIT: usize = 512;

const POWER_MAX_ITER: usize = 1_000_000;

/// Strong connectivity of the graph of positive off-diagonal entries.
pub(crate) fn check_irreducible(a: &DMatrix<f64>) -> Result<()> {
    let d = a.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; d];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..d {
                let w = if forward { a[(i, j)] } else { a[(j, i)] };
                if i != j && w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    for forward in [true, false] {
        if let Some(site) = reach(forward).iter().position(|s| !s) {
            let dir = if forward { "reached from" } else { "reach" };
            return Err(Error::Reducible(format!("site {site} cannot {dir} site 0")));
        }
    }
    Ok(())
}

/// Perron triple `(lambda, phi, phi*)` of an irreducible Metzler matrix,
/// normalized by `<phi, phi>_m = <phi, phi*>_m = 1`.
///
/// `phi*` is the eigenfunction of the `L^2(m)` adjoint, so `m * phi*` is the
/// left eigenvector of `A`.
pub fn principal_eigen(a: &DMatrix<f64>, m: &[f64]) -> Result<EigenData> {
    let d = a.nrows();
    check_len("matrix columns", d, a.ncols())?;
    check_len("reference weights", d, m.len())?;
    if d == 0 {
        return Err(Error::Invalid("empty matrix".into()));
    }
    for i in 0..d {
        for j in 0..d {
            if i != j && a[(i, j)] < 0.0 {
                return Err(Error::Invalid(format!("A[{i}][{j}] < 0: not a Metzler matrix")));
            }
        }
    }
    check_irreducible(a)?;

    if d == 1 {
        return Ok(EigenData {
            lambda: a[(0, 0)],
            phi: vec![1.0 / m[0].sqrt()],
            phi_star: vec![1.0 / m[0].sqrt()],
        });
    }

    let (right, left) = if d <= DENSE_LIMIT {
        dense_perron(a)?
    } else {
        (power_perron(a)?, power_perron(&a.transpose())?)
    };

    let mut phi = positive_orientation(right)?;
    let left = positive_orientation(left)?;
    let mut phi_star: DVector<f64> = DVector::from_iterator(d, left.iter().zip(m).map(|(w, mi)| w / mi));

    let lambda = {
        let a_phi = a * &phi;
        left.dot(&a_phi) / left.dot(&phi)
    };

    let norm_phi = phi.iter().zip(m).map(|(p, mi)| p * p * mi).sum::<f64>().sqrt();
    phi /= norm_phi;
    let norm_star = phi_star.iter().zip(m).map(|(p, mi)| p * p * mi).sum::<f64>().sqrt();
    let overlap = phi.iter().zip(phi_star.iter()).zip(m).map(|((p, q), mi)| p * q * mi).sum::<f64>();
    if overlap / norm_star < 1e-8 {
        log::warn!(
            "principal eigenvectors are nearly m-orthogonal (<phi, phi*>_m = {:e}); normalization is ill-conditioned",
            overlap / norm_star
        );
    }
    phi_star /= overlap;

    Ok(EigenData {
        lambda,
        phi: phi.iter().copied().collect(),
        phi_star: phi_star.iter().copied().collect(),
    })
}

/// Right and left null vectors of `A - lambda I` with `lambda` the
/// rightmost eigenvalue from the real Schur form.
fn dense_perron(a: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = a.nrows();
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or(Error::EigenNonConvergence { iterations: 10_000 })?;
    let lambda = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = a - DMatrix::identity(d, d) * lambda;
    let right = null_vector(shifted.clone())?;
    let left = null_vector(shifted.transpose())?;
    Ok((right, left))
}

fn null_vector(m: DMatrix<f64>) -> Result<DVector<f64>> {
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::EigenNonConvergence { iterations: 0 })?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bk, bs), (k, &s)| if s < bs { (k, s) } else { (bk, bs) });
    Ok(v_t.row(k).transpose())
}

/// Shifted power iteration on `A + sI`, which is nonnegative and primitive.
fn power_perron(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let d = a.nrows();
    let shift = (0..d).map(|i| a[(i, i)].abs()).fold(0.0, f64::max) + 1.0;
    let b = a + DMatrix::identity(d, d) * shift;
    let mut x = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    for _ in 0..POWER_MAX_ITER {
        let mut y = &b * &x;
        y /= y.norm();
        let change = (&y - &x).amax();
        x = y;
        if change < 1e-15 {
            return Ok(x);
        }
    }
    Err(Error::EigenNonConvergence {
        iterations: POWER_MAX_ITER,
    })
}

fn positive_orientation(mut v: DVector<f64>) -> Result<DVector<f64>> {
    if v.sum() < 0.0 {
        v = -v;
    }
    if let Some(i) = v.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::Reducible(format!(
            "principal eigenvector is not strictly positive at site {i}"
        )));
    }
    Ok(v)
}
