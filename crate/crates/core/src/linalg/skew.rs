use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{symmetric_eigen, LinalgError};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Seeded random skew-symmetric matrix with standard-normal upper triangle.
///
/// The diagonal is exactly zero and `A[j][i] = -A[i][j]` bit-for-bit.
pub fn random_skew<T: Real>(dim: usize, seed: u64) -> Matrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in (i + 1)..dim {
            let x: f64 = StandardNormal.sample(&mut rng);
            let x = T::lit(x);
            a[(i, j)] = x;
            a[(j, i)] = -x;
        }
    }
    a
}

/// Matrix exponential of a skew-symmetric matrix.
///
/// Uses `exp(S) = cos(Ω) + S · sinc(Ω)` where `Ω = sqrt(−S²)`; both terms
/// are functions of the symmetric positive semidefinite `−S²`, evaluated
/// through its eigen-factorization. The result is orthogonal to rounding.
pub fn skew_exp<T: Real>(s: &Matrix<T>) -> Result<Matrix<T>, LinalgError> {
    if !s.is_square() {
        return Err(LinalgError::ShapeMismatch {
            left: s.shape(),
            right: (s.cols(), s.rows()),
        });
    }
    let scale = s.max_abs().max(T::min_positive_value());
    let defect = s.skew_defect();
    if defect > scale * T::epsilon() * T::lit(16.0) {
        return Err(LinalgError::NotSkew {
            defect: defect.as_f64(),
        });
    }
    let n = s.rows();
    let neg_sq = s.tr_matmul(s); // SᵀS = −S²
    let eig = symmetric_eigen(&neg_sq)?;
    let q = &eig.vectors;
    let mut cos_diag = Vec::with_capacity(n);
    let mut sinc_diag = Vec::with_capacity(n);
    for &lambda in &eig.values {
        let w = lambda.max(T::zero()).sqrt();
        cos_diag.push(w.cos());
        sinc_diag.push(if w < T::lit(1e-8) {
            T::one() - w * w / T::lit(6.0)
        } else {
            w.sin() / w
        });
    }
    let cos_part = q.matmul(&Matrix::from_diag(&cos_diag)).matmul(&q.transpose());
    let sinc_part = q.matmul(&Matrix::from_diag(&sinc_diag)).matmul(&q.transpose());
    Ok(&cos_part + &s.matmul(&sinc_part))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skew_and_deterministic() {
        let a: Matrix<f64> = random_skew(6, 42);
        assert_eq!(a.skew_defect(), 0.0);
        for i in 0..6 {
            assert_eq!(a[(i, i)], 0.0);
        }
        assert_eq!(a, random_skew(6, 42));
        assert_ne!(a, random_skew(6, 43));
    }

    #[test]
    fn two_by_two_form() {
        let a: Matrix<f64> = random_skew(2, 0);
        assert_eq!(a[(0, 0)], 0.0);
        assert_eq!(a[(1, 1)], 0.0);
        assert_eq!(a[(1, 0)], -a[(0, 1)]);
    }

    #[test]
    fn exp_of_planar_generator_is_rotation() {
        let t = 0.7;
        let s = Matrix::<f64>::from_rows(&[&[0.0, -t], &[t, 0.0]]);
        let r = skew_exp(&s).unwrap();
        let expect = Matrix::<f64>::from_rows(&[&[t.cos(), -t.sin()], &[t.sin(), t.cos()]]);
        assert!((&r - &expect).frobenius_norm() < 1e-14);
    }

    #[test]
    fn exp_is_orthogonal() {
        let s: Matrix<f64> = random_skew(7, 3);
        let r = skew_exp(&s).unwrap();
        assert!(r.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn exp_rejects_non_skew() {
        let s = Matrix::<f64>::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(skew_exp(&s), Err(LinalgError::NotSkew { .. })));
    }
}
