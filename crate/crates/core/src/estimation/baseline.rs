//! Centralized reference iterations on a dense `Ē`, used as oracles and for
//! convergence comparisons.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rayleigh quotient `xᵀ M x / xᵀ x`.
pub fn rayleigh(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x)) / x.norm_squared()
}

/// Power iteration on `cI − Ē`. Returns the Rayleigh quotient of `E` after
/// each step, starting with the initial vector.
pub fn power_iteration(
    e_bar: &DMatrix<f64>,
    e: &DMatrix<f64>,
    shift: f64,
    x0: &DVector<f64>,
    steps: usize,
) -> Vec<f64> {
    let mut x = x0.normalize();
    let mut out = vec![rayleigh(e, &x)];
    for _ in 0..steps {
        x = (&x * shift - e_bar * &x).normalize();
        out.push(rayleigh(e, &x));
    }
    out
}

/// Shifted inverse iteration on `(Ē − μI)⁻¹` with an exact LU solve.
/// Returns the Rayleigh quotients of `E` and the final unit vector.
pub fn inverse_iteration(
    e_bar: &DMatrix<f64>,
    e: &DMatrix<f64>,
    mu: f64,
    x0: &DVector<f64>,
    steps: usize,
) -> Result<(Vec<f64>, DVector<f64>)> {
    let n = e_bar.nrows();
    let lu = (e_bar - DMatrix::identity(n, n) * mu).lu();
    let mut x = x0.normalize();
    let mut out = vec![rayleigh(e, &x)];
    for _ in 0..steps {
        x = lu
            .solve(&x)
            .ok_or_else(|| Error::InvalidParameter(format!("Ē − {mu}I is singular")))?
            .normalize();
        out.push(rayleigh(e, &x));
    }
    Ok((out, x))
}

/// Dense solve of `(Ē − μI) r = b`.
pub fn direct_solve(e_bar: &DMatrix<f64>, mu: f64, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = e_bar.nrows();
    (e_bar - DMatrix::identity(n, n) * mu)
        .lu()
        .solve(b)
        .ok_or_else(|| Error::InvalidParameter(format!("Ē − {mu}I is singular")))
}

/// First index whose value is within `rel_tol` of `target` and stays there.
pub fn iterations_to_tolerance(series: &[f64], target: f64, rel_tol: f64) -> Option<usize> {
    let ok = |x: &f64| ((x - target) / target).abs() < rel_tol;
    let last_bad = series.iter().rposition(|x| !ok(x));
    match last_bad {
        None => Some(0),
        Some(i) if i + 1 < series.len() => Some(i + 1),
        Some(_) => None,
    }
}
