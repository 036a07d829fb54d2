use crate::linalg::{compute_svd, LinalgError};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Solution of `min ‖a·R − b‖_F` over orthogonal `R`.
#[derive(Clone, Debug)]
pub struct Procrustes<T> {
    pub rotation: Matrix<T>,
    /// False when `aᵀb` is rank-deficient and the minimizer is not unique.
    pub unique: bool,
}

/// Orthogonal Procrustes: with `aᵀb = U S Vᵀ`, returns `R = U Vᵀ`.
pub fn procrustes_rotation<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Procrustes<T>, LinalgError> {
    if a.shape() != b.shape() {
        return Err(LinalgError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    let cross = a.tr_matmul(b);
    let f = compute_svd(&cross)?;
    let rotation = f.u.matmul(&f.v.transpose());
    let top = f.sigma.first().copied().unwrap_or_else(T::zero);
    let bottom = f.sigma.last().copied().unwrap_or_else(T::zero);
    let k = T::from_usize(f.sigma.len()).expect("usize");
    let unique = top > T::zero() && bottom > top * T::epsilon() * k * T::lit(16.0);
    Ok(Procrustes { rotation, unique })
}
