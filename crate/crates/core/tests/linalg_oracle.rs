mod common;

use common::{gaussian, orthonormal, rng, unit_frobenius};
use nalgebra::DMatrix;
use proptest::prelude::*;
use spectral_surgery::linalg::{
    compute_svd, principal_angles, procrustes_rotation, random_skew, skew_exp, symmetric_eigen,
};
use spectral_surgery::{Matrix32, Matrix64};

fn to_na(a: &Matrix64) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

/// Eigenvalues of `aᵀa` from nalgebra, descending.
fn gram_eigenvalues(a: &Matrix64) -> Vec<f64> {
    let na = to_na(a);
    let gram = na.transpose() * &na;
    let mut ev: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

fn check_svd(a: &Matrix64, tol: f64) {
    let f = compute_svd(a).unwrap();
    let r = a.rows().min(a.cols());
    assert_eq!(f.sigma.len(), r);
    assert!(f.u.orthonormality_defect() <= tol, "U defect {}", f.u.orthonormality_defect());
    assert!(f.v.orthonormality_defect() <= tol, "V defect {}", f.v.orthonormality_defect());
    let rel = (&f.reconstruct() - a).frobenius_norm() / a.frobenius_norm().max(f64::MIN_POSITIVE);
    assert!(rel <= tol, "reconstruction {rel}");
    assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
    assert!(f.sigma.iter().all(|&s| s >= 0.0));
    let ev = gram_eigenvalues(a);
    for (i, &e) in ev.iter().enumerate() {
        let s2 = f.sigma.get(i).map_or(0.0, |s| s * s);
        assert!((s2 - e).abs() <= 1e-9 * a.frobenius_norm_sq().max(1.0), "σ²[{i}] {s2} vs {e}");
    }
}

#[test]
fn svd_matches_gram_eigenvalues_across_shapes() {
    let mut g = rng(42);
    for &(m, n) in &[(1, 1), (1, 7), (7, 1), (5, 5), (12, 4), (4, 12), (40, 33), (33, 40), (64, 64)] {
        check_svd(&unit_frobenius(gaussian(m, n, &mut g)), 1e-10);
    }
}

#[test]
fn svd_handles_rank_deficiency() {
    let mut g = rng(7);
    for &(m, n, k) in &[(20, 20, 3), (30, 12, 1), (12, 30, 5), (16, 16, 15)] {
        let a = gaussian(m, k, &mut g).matmul(&gaussian(k, n, &mut g));
        let a = unit_frobenius(a);
        check_svd(&a, 1e-10);
        let f = compute_svd(&a).unwrap();
        assert!(f.sigma[k..].iter().all(|&s| s <= 1e-12), "{:?}", &f.sigma[k..]);
    }
}

#[test]
fn svd_in_single_precision() {
    let mut g = rng(3);
    let a = unit_frobenius(gaussian(20, 14, &mut g));
    let a32: Matrix32 = a.cast();
    let f = compute_svd(&a32).unwrap();
    assert!(f.u.orthonormality_defect() <= 1e-5);
    let rel = (&f.reconstruct() - &a32).frobenius_norm() / a32.frobenius_norm();
    assert!(rel <= 1e-5, "{rel}");
    let f64s = compute_svd(&a).unwrap().sigma;
    for (s32, s64) in f.sigma.iter().zip(&f64s) {
        assert!((f64::from(*s32) - s64).abs() <= 1e-5);
    }
}

#[test]
fn symmetric_eigen_matches_nalgebra() {
    let mut g = rng(11);
    let b = gaussian(25, 25, &mut g);
    let s = &b + &b.transpose();
    let ours = symmetric_eigen(&s).unwrap();
    let mut theirs: Vec<f64> = to_na(&s).symmetric_eigen().eigenvalues.iter().copied().collect();
    theirs.sort_by(|x, y| y.partial_cmp(x).unwrap());
    for (a, b) in ours.values.iter().zip(&theirs) {
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn skew_exponential_matches_nalgebra_exp() {
    for dim in [2, 3, 8, 16] {
        let s = random_skew::<f64>(dim, dim as u64).scale(0.7);
        let ours = skew_exp(&s).unwrap();
        let theirs = to_na(&s).exp();
        let diff = (to_na(&ours) - theirs).abs().max();
        assert!(diff <= 1e-12, "dim {dim}: {diff}");
        assert!(ours.orthonormality_defect() <= 1e-13, "dim {dim}: defect {}", ours.orthonormality_defect());
    }
}

#[test]
fn procrustes_recovers_planted_rotation() {
    let mut g = rng(5);
    for dim in [2, 5, 12] {
        let r_true = orthonormal(dim, dim, &mut g);
        let a = gaussian(30, dim, &mut g);
        let b = a.matmul(&r_true);
        let p = procrustes_rotation(&a, &b).unwrap();
        assert!(p.unique);
        assert!((&p.rotation - &r_true).frobenius_norm() <= 1e-10);
    }
}

#[test]
fn principal_angles_match_nalgebra_cosines() {
    let mut g = rng(13);
    for &(m, k) in &[(10, 3), (40, 8), (25, 25)] {
        let a = orthonormal(m, k, &mut g);
        let b = orthonormal(m, k, &mut g);
        let ours = principal_angles(&a, &b).unwrap();
        let overlap = to_na(&a).transpose() * to_na(&b);
        let mut cos: Vec<f64> = overlap.singular_values().iter().copied().collect();
        cos.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (t, c) in ours.iter().zip(&cos) {
            assert!((t.cos() - c.min(1.0)).abs() <= 1e-10, "{t} vs acos {c}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn svd_invariants(m in 1usize..10, n in 1usize..10, seed in any::<u64>(), scale in -6i32..6) {
        let mut g = rng(seed);
        let a = gaussian(m, n, &mut g).scale(10f64.powi(scale));
        let f = compute_svd(&a).unwrap();
        prop_assert!(f.u.orthonormality_defect() <= 1e-12);
        prop_assert!(f.v.orthonormality_defect() <= 1e-12);
        let rel = (&f.reconstruct() - &a).frobenius_norm() / a.frobenius_norm();
        prop_assert!(rel <= 1e-12);
        prop_assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        for j in 0..f.rank_dim() {
            if f.sigma[j] == 0.0 { continue; }
            let col = f.u.column(j);
            let big = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            prop_assert!(big > 0.0, "sign canonicalization");
        }
    }

    #[test]
    fn svd_is_deterministic(m in 1usize..8, n in 1usize..8, seed in any::<u64>()) {
        let a = gaussian(m, n, &mut rng(seed));
        let x = compute_svd(&a).unwrap();
        let y = compute_svd(&a).unwrap();
        prop_assert_eq!(x.u.as_slice(), y.u.as_slice());
        prop_assert_eq!(&x.sigma, &y.sigma);
    }
}
