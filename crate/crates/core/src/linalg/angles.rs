use crate::linalg::{compute_svd, LinalgError, SvdFactors};
use crate::matrix::Matrix;
use crate::scalar::Real;

fn orthonormal_tol<T: Real>(k: usize) -> T {
    let floor = T::epsilon() * T::lit(64.0) * T::from_usize(k.max(1)).expect("usize").sqrt();
    T::lit(1e-8).max(floor)
}

fn check_orthonormal<T: Real>(u: &Matrix<T>) -> Result<(), LinalgError> {
    let defect = u.orthonormality_defect();
    if !(defect <= orthonormal_tol::<T>(u.cols())) {
        return Err(LinalgError::NotOrthonormal {
            defect: defect.as_f64(),
        });
    }
    Ok(())
}

fn clamped_acos<T: Real>(s: T) -> T {
    s.max(-T::one()).min(T::one()).acos()
}

/// Principal angles between `span(u_base)` and `span(u_tgt)`, in radians,
/// non-decreasing. There are `min(k_base, k_tgt)` of them.
///
/// Both inputs must have orthonormal columns and the same number of rows.
/// Cosines are the singular values of `Pᵀ·Q` (with `Q` the narrower basis)
/// and sines those of `Q − P·PᵀQ`. Angles below π/4 come from the sines,
/// the rest from the cosines, each clamped to `[0, 1]` first. Taking small
/// angles from `acos` alone would lose about half the digits.
pub fn principal_angles<T: Real>(u_base: &Matrix<T>, u_tgt: &Matrix<T>) -> Result<Vec<T>, LinalgError> {
    if u_base.rows() != u_tgt.rows() {
        return Err(LinalgError::ShapeMismatch {
            left: u_base.shape(),
            right: u_tgt.shape(),
        });
    }
    check_orthonormal(u_base)?;
    check_orthonormal(u_tgt)?;
    let (wide, narrow) = if u_base.cols() >= u_tgt.cols() {
        (u_base, u_tgt)
    } else {
        (u_tgt, u_base)
    };
    if narrow.cols() == 0 {
        return Ok(Vec::new());
    }
    let overlap = wide.tr_matmul(narrow);
    let cosines = compute_svd(&overlap)?.sigma;
    let residual = narrow - &wide.matmul(&overlap);
    let mut sines = compute_svd(&residual)?.sigma;
    sines.reverse();

    let half = T::lit(0.5);
    Ok(cosines
        .into_iter()
        .zip(sines)
        .map(|(c, s)| {
            if s * s < half {
                s.min(T::one()).asin()
            } else {
                clamped_acos(c)
            }
        })
        .collect())
}

/// Angle between same-index columns `a_i` and `b_i`, ignoring sign:
/// `atan2(‖b_i − ⟨a_i, b_i⟩ a_i‖, |⟨a_i, b_i⟩|)`, accurate at every angle.
pub fn per_index_angles<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Vec<T>, LinalgError> {
    if a.shape() != b.shape() {
        return Err(LinalgError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok((0..a.cols())
        .map(|j| {
            let d = (0..a.rows()).fold(T::zero(), |acc, i| acc + a[(i, j)] * b[(i, j)]);
            let r = (0..a.rows())
                .map(|i| {
                    let e = b[(i, j)] - d * a[(i, j)];
                    e * e
                })
                .sum::<T>()
                .sqrt();
            r.atan2(d.abs())
        })
        .collect())
}

/// Subspace and per-vector rotation between two decompositions.
#[derive(Clone, Debug, PartialEq)]
pub struct PrincipalAngleSpectrum<T> {
    /// Principal angles between left singular subspaces.
    pub theta_left: Vec<T>,
    pub theta_right: Vec<T>,
    /// Same-index left singular vector angles.
    pub per_index_left: Vec<T>,
    pub per_index_right: Vec<T>,
}

impl<T: Real> PrincipalAngleSpectrum<T> {
    pub fn between(base: &SvdFactors<T>, tgt: &SvdFactors<T>) -> Result<Self, LinalgError> {
        Ok(Self {
            theta_left: principal_angles(&base.u, &tgt.u)?,
            theta_right: principal_angles(&base.v, &tgt.v)?,
            per_index_left: per_index_angles(&base.u, &tgt.u)?,
            per_index_right: per_index_angles(&base.v, &tgt.v)?,
        })
    }
}
