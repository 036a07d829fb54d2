//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! The input is orthogonalized column-by-column in a fixed cyclic pair order,
//! so the output is a deterministic function of the input bits. Left vectors
//! are recovered from the rotated columns and re-orthonormalized, which keeps
//! `uᵀu = I` tight even for rank-deficient inputs.

use crate::linalg::LinalgError;
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Maximum number of full Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 200;

/// Thin singular value decomposition `W = u · diag(sigma) · vᵀ`.
///
/// `u` is `m × r`, `v` is `n × r` with `r = min(m, n)`. Singular values are
/// non-increasing and the factors are sign-canonical: the largest-magnitude
/// entry of every `u` column with a positive singular value is positive.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdFactors<T> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Real> SvdFactors<T> {
    pub fn rank_dim(&self) -> usize {
        self.sigma.len()
    }

    /// `u · diag(sigma) · vᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        reconstruct_with(&self.u, &self.sigma, &self.v)
    }
}

/// `u · diag(sigma) · vᵀ` for arbitrary conforming factors.
pub fn reconstruct_with<T: Real>(u: &Matrix<T>, sigma: &[T], v: &Matrix<T>) -> Matrix<T> {
    assert_eq!(u.cols(), sigma.len());
    assert_eq!(v.cols(), sigma.len());
    let mut us = u.clone();
    for i in 0..us.rows() {
        for (j, &s) in sigma.iter().enumerate() {
            us[(i, j)] = us[(i, j)] * s;
        }
    }
    us.matmul(&v.transpose())
}

/// Computes the thin, sign-canonical SVD of `matrix`.
pub fn compute_svd<T: Real>(matrix: &Matrix<T>) -> Result<SvdFactors<T>, LinalgError> {
    let (m, n) = matrix.shape();
    if m == 0 || n == 0 {
        return Err(LinalgError::Empty);
    }
    if !matrix.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let factors = if m >= n {
        jacobi_tall(matrix)?
    } else {
        let t = jacobi_tall(&matrix.transpose())?;
        SvdFactors {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        }
    };
    Ok(canonicalize_signs(factors))
}

/// Flips each singular pair so that the largest-magnitude entry of the left
/// vector is positive. Pairs with a zero singular value are left as produced.
pub fn canonicalize_signs<T: Real>(mut factors: SvdFactors<T>) -> SvdFactors<T> {
    let m = factors.u.rows();
    let n = factors.v.rows();
    for j in 0..factors.sigma.len() {
        if factors.sigma[j] == T::zero() {
            continue;
        }
        let mut pivot = 0;
        let mut best = T::neg_infinity();
        for i in 0..m {
            let a = factors.u[(i, j)].abs();
            if a > best {
                best = a;
                pivot = i;
            }
        }
        if factors.u[(pivot, j)] < T::zero() {
            for i in 0..m {
                factors.u[(i, j)] = -factors.u[(i, j)];
            }
            for i in 0..n {
                factors.v[(i, j)] = -factors.v[(i, j)];
            }
        }
    }
    factors
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm_sq<T: Real>(a: &[T]) -> T {
    dot(a, a)
}

fn rotate<T: Real>(p: &mut [T], q: &mut [T], c: T, s: T) {
    for (x, y) in p.iter_mut().zip(q.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// One-sided Jacobi for `m >= n`.
fn jacobi_tall<T: Real>(matrix: &Matrix<T>) -> Result<SvdFactors<T>, LinalgError> {
    let (m, n) = matrix.shape();
    debug_assert!(m >= n);

    let scale = matrix.max_abs();
    if scale == T::zero() {
        return Ok(SvdFactors {
            u: complete_basis(m, Vec::new(), n),
            sigma: vec![T::zero(); n],
            v: Matrix::identity(n),
        });
    }
    let inv = T::one() / scale;
    let mut cols: Vec<Vec<T>> = (0..n)
        .map(|j| (0..m).map(|i| matrix[(i, j)] * inv).collect())
        .collect();
    let mut vcols: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();
    let mut sq: Vec<T> = cols.iter().map(|c| norm_sq(c)).collect();

    let tol = T::convergence_tol();
    // Squared-norm floor below which a column counts as rounding noise and is left alone.
    let negligible = sq.iter().fold(T::zero(), |acc, &x| acc + x) * T::epsilon() * T::epsilon();
    let mut converged = n == 1;
    let mut residual = T::zero();
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        residual = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = sq[p];
                let beta = sq[q];
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                let off = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                residual = residual.max(off);
                if off <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = vcols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                sq[p] = norm_sq(&cols[p]);
                sq[q] = norm_sq(&cols[q]);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            sweeps: MAX_SWEEPS,
            residual: residual.as_f64(),
        });
    }

    let norms: Vec<T> = sq.iter().map(|&x| x.sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable: ties keep their original column index order.
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite norms"));

    let sigma_max = norms[order[0]];
    let null_tol = sigma_max * T::epsilon() * T::from_usize(m).expect("usize fits");
    let mut accepted: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut needs_completion = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        if norms[j] <= null_tol {
            needs_completion.push(slot);
            accepted.push(Vec::new());
            continue;
        }
        let mut col: Vec<T> = cols[j].iter().map(|&x| x / norms[j]).collect();
        for _ in 0..2 {
            for prev in accepted.iter().filter(|c| !c.is_empty()) {
                let d = dot(prev, &col);
                for (x, &y) in col.iter_mut().zip(prev) {
                    *x = *x - d * y;
                }
            }
        }
        let len = norm_sq(&col).sqrt();
        if len < T::lit(0.5) {
            needs_completion.push(slot);
            accepted.push(Vec::new());
            continue;
        }
        col.iter_mut().for_each(|x| *x = *x / len);
        accepted.push(col);
    }
    let u = if needs_completion.is_empty() {
        Matrix::from_columns(m, &accepted)
    } else {
        complete_basis(m, accepted, n)
    };

    let sigma = order.iter().map(|&j| norms[j] * scale).collect();
    let v_sorted: Vec<Vec<T>> = order.iter().map(|&j| vcols[j].clone()).collect();
    Ok(SvdFactors {
        u,
        sigma,
        v: Matrix::from_columns(n, &v_sorted),
    })
}

/// Fills the empty slots of `columns` (up to `want` columns) with unit vectors
/// orthogonal to every filled slot. Each new column starts from the standard
/// basis vector with the largest component outside the current span (lowest
/// index on ties), so a usable direction exists as long as the span is short
/// of the full space.
fn complete_basis<T: Real>(m: usize, mut columns: Vec<Vec<T>>, want: usize) -> Matrix<T> {
    columns.resize(want, Vec::new());
    // weight[i] = squared norm of e_i projected off the filled columns.
    let mut weight = vec![T::one(); m];
    for c in columns.iter().filter(|c| !c.is_empty()) {
        for (w, &x) in weight.iter_mut().zip(c) {
            *w = *w - x * x;
        }
    }
    for slot in 0..want {
        if !columns[slot].is_empty() {
            continue;
        }
        let mut pick = 0;
        for i in 1..m {
            if weight[i] > weight[pick] {
                pick = i;
            }
        }
        assert!(weight[pick] > T::zero(), "cannot complete orthonormal basis");
        let mut col = vec![T::zero(); m];
        col[pick] = T::one();
        for _ in 0..2 {
            for other in columns.iter().filter(|c| !c.is_empty()) {
                let d = dot(other, &col);
                for (x, &y) in col.iter_mut().zip(other) {
                    *x = *x - d * y;
                }
            }
        }
        let len = norm_sq(&col).sqrt();
        col.iter_mut().for_each(|x| *x = *x / len);
        for (w, &x) in weight.iter_mut().zip(&col) {
            *w = *w - x * x;
        }
        columns[slot] = col;
    }
    Matrix::from_columns(m, &columns)
}
