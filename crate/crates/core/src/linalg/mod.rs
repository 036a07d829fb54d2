//! Deterministic dense linear algebra: thin SVD, principal angles,
//! orthogonal Procrustes, skew-symmetric generators and the exponential map.

mod angles;
mod eigen;
mod procrustes;
mod skew;
mod svd;

use thiserror::Error;

pub use angles::{per_index_angles, principal_angles, PrincipalAngleSpectrum};
pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use procrustes::{procrustes_rotation, Procrustes};
pub use skew::{random_skew, skew_exp};
pub use svd::{canonicalize_signs, compute_svd, reconstruct_with, SvdFactors, MAX_SWEEPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is empty")]
    Empty,
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("columns are not orthonormal (defect {defect:e})")]
    NotOrthonormal { defect: f64 },
    #[error("matrix is not skew-symmetric (defect {defect:e})")]
    NotSkew { defect: f64 },
}
