use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues in `[-ROUNDOFF_TOL, 0)` are roundoff and get clipped; anything lower is an error.
pub const ROUNDOFF_TOL: f64 = 1e-10;

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Returns `L` with `L Lᵀ = cov`. Tries Cholesky first and falls back to a
/// clipped eigendecomposition for singular covariances.
pub fn psd_factor(cov: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = SymmetricEigen::new(cov.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -ROUNDOFF_TOL {
        return Err(Error::NotPsd {
            context: context.to_string(),
            min_eig: min,
        });
    }
    let mut factor = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let scale = lam.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(scale);
    }
    Ok(factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_reproduces_singular_covariance() {
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let l = psd_factor(&cov, "test").unwrap();
        let back = &l * l.transpose();
        assert!((back - cov).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(psd_factor(&cov, "x"), Err(Error::NotPsd { .. })));
        assert!((min_eigenvalue(&cov) + 1.0).abs() < 1e-12);
    }
}
