use nalgebra::DMatrix;

use crate::{Error, Result};

/// Solves `(k + shift * I) x = rhs` by Cholesky factorization.
pub(crate) fn shifted_solve(k: &DMatrix<f64>, shift: f64, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    let mut a = k.clone();
    for i in 0..n {
        a[(i, i)] += shift;
    }
    // symmetrize so tiny asymmetries from accumulation never trip the factorization
    let a = (&a + a.transpose()) * 0.5;
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::numeric(format!("regularized {n}x{n} system is not positive definite")))?;
    let x = chol.solve(rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite solution of regularized system"));
    }
    Ok(x)
}

/// `H K H` with `H = I - 11ᵀ/m`.
pub(crate) fn center(k: &DMatrix<f64>) -> DMatrix<f64> {
    let m = k.nrows();
    if m == 0 {
        return k.clone();
    }
    let row_means: Vec<f64> = (0..m).map(|i| k.row(i).sum() / m as f64).collect();
    let col_means: Vec<f64> = (0..m).map(|j| k.column(j).sum() / m as f64).collect();
    let grand = row_means.iter().sum::<f64>() / m as f64;
    DMatrix::from_fn(m, m, |i, j| k[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// Smallest eigenvalue of the symmetric part of `k`.
#[cfg(test)]
pub(crate) fn min_eigenvalue(k: &DMatrix<f64>) -> f64 {
    let s = (k + k.transpose()) * 0.5;
    nalgebra::SymmetricEigen::new(s).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// True if `k` is symmetric and its spectrum is above `-rel_tol * trace`.
#[cfg(test)]
pub(crate) fn is_psd(k: &DMatrix<f64>, rel_tol: f64) -> bool {
    let sym = (k - k.transpose()).abs().max() <= 1e-10 * k.abs().max().max(1.0);
    sym && min_eigenvalue(k) >= -rel_tol * k.trace().abs()
}
