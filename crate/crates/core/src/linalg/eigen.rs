//! Cyclic Jacobi eigensolver for symmetric matrices.

use crate::linalg::LinalgError;
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Eigen-decomposition `a = q · diag(values) · qᵀ` of a symmetric matrix.
/// Eigenvalues are returned in non-increasing order.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

/// Sweeps continue until every off-diagonal entry is within a few ulps of
/// the geometric mean of its two diagonal entries, so matrix functions built
/// from the factorization are accurate to rounding.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> Result<SymmetricEigen<T>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::ShapeMismatch {
            left: a.shape(),
            right: (a.cols(), a.rows()),
        });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = a.rows();
    let mut work = a.clone();
    let mut q = Matrix::identity(n);
    let tol = T::epsilon() * T::lit(2.0);

    let mut converged = n <= 1;
    let mut residual = T::zero();
    for _ in 0..super::svd::MAX_SWEEPS {
        if converged {
            break;
        }
        let diag_scale = (0..n).fold(T::zero(), |acc, i| acc.max(work[(i, i)].abs()));
        let floor = diag_scale.max(work.max_abs()) * T::epsilon();
        let mut rotated = false;
        residual = T::zero();
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = work[(p, r)];
                let app = work[(p, p)];
                let arr = work[(r, r)];
                let scale = (app.abs() * arr.abs()).sqrt().max(floor);
                if scale == T::zero() {
                    continue;
                }
                let off = apr.abs() / scale;
                residual = residual.max(off);
                if off <= tol {
                    continue;
                }
                rotated = true;
                let theta = (arr - app) / (T::lit(2.0) * apr);
                let t = theta.signum() / (theta.abs() + (T::one() + theta * theta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let akp = work[(k, p)];
                    let akr = work[(k, r)];
                    work[(k, p)] = c * akp - s * akr;
                    work[(k, r)] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = work[(p, k)];
                    let ark = work[(r, k)];
                    work[(p, k)] = c * apk - s * ark;
                    work[(r, k)] = s * apk + c * ark;
                }
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            sweeps: super::svd::MAX_SWEEPS,
            residual: residual.as_f64(),
        });
    }

    let raw: Vec<T> = (0..n).map(|i| work[(i, i)]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| raw[y].partial_cmp(&raw[x]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| raw[i]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| q[(i, order[j])]);
    Ok(SymmetricEigen { values, vectors })
}
