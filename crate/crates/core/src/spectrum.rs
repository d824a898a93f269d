//! Extreme eigenvalues of symmetric positive definite matrices.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 10_000;

/// `(λ_min, λ_max)` of a symmetric positive definite matrix, i.e. the moduli
/// `(m, L)` of the quadratic it defines.
pub fn estimate_moduli(hessian: &Array2<f64>) -> Result<(f64, f64)> {
    let n = hessian.nrows();
    if n == 0 || hessian.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: hessian.ncols(),
        });
    }
    let scale = hessian.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (hessian[[i, j]] - hessian[[j, i]]).abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::InvalidParameter {
                    name: "hessian",
                    reason: format!("matrix is not symmetric at ({i}, {j})"),
                });
            }
        }
    }
    let dense = DMatrix::from_fn(n, n, |i, j| hessian[[i, j]]);
    let eigen =
        dense
            .try_symmetric_eigen(f64::EPSILON, MAX_SWEEPS)
            .ok_or(Error::EigenNotConverged {
                iterations: MAX_SWEEPS,
            })?;
    let lambda_min = eigen.eigenvalues.min();
    let lambda_max = eigen.eigenvalues.max();
    if !(lambda_min > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok((lambda_min, lambda_max))
}
