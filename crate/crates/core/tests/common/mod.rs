//! Synthetic matrices and checkpoints shared by the integration suites.
#![allow(dead_code)]

pub mod gp_oracle;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spectral_surgery::store::{Checkpoint, DType, TensorRecord};
use spectral_surgery::Matrix64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Matrix64 {
    Matrix64::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

pub fn unit_frobenius(a: Matrix64) -> Matrix64 {
    let f = a.frobenius_norm();
    a.scale(1.0 / f)
}

/// `m × k` orthonormal columns by twice-applied modified Gram-Schmidt on a
/// Gaussian matrix.
pub fn orthonormal(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Matrix64 {
    assert!(k <= m);
    let g = gaussian(m, k, rng);
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| g.column(j)).collect();
    for j in 0..k {
        for _ in 0..2 {
            for i in 0..j {
                let d: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                let prev = cols[i].clone();
                for (x, p) in cols[j].iter_mut().zip(&prev) {
                    *x -= d * p;
                }
            }
        }
        let n = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        cols[j].iter_mut().for_each(|x| *x /= n);
    }
    Matrix64::from_columns(m, &cols)
}

/// `u · diag(sigma) · vᵀ` with `u`, `v` holding `sigma.len()` columns.
pub fn compose(u: &Matrix64, sigma: &[f64], v: &Matrix64) -> Matrix64 {
    let r = sigma.len();
    let us = Matrix64::from_fn(u.rows(), r, |i, j| u[(i, j)] * sigma[j]);
    let vt = v.columns_range(0, r).transpose();
    us.matmul(&vt)
}

/// Rotates column `i` of `q` toward column `j` by `theta`:
/// `q_i ← cos θ q_i + sin θ q_j`, `q_j ← −sin θ q_i + cos θ q_j`.
pub fn givens_columns(q: &mut Matrix64, i: usize, j: usize, theta: f64) {
    let (s, c) = theta.sin_cos();
    let a = q.column(i);
    let b = q.column(j);
    let new_a: Vec<f64> = a.iter().zip(&b).map(|(x, y)| c * x + s * y).collect();
    let new_b: Vec<f64> = a.iter().zip(&b).map(|(x, y)| -s * x + c * y).collect();
    q.set_column(i, &new_a);
    q.set_column(j, &new_b);
}

/// A base matrix and a fine-tuned copy whose top `head` singular directions
/// were rotated and whose spectrum was nudged.
pub struct PlantedPair {
    pub base: Matrix64,
    pub target: Matrix64,
    pub sigma_base: Vec<f64>,
    pub sigma_target: Vec<f64>,
    /// Per-index angle planted on each left singular vector.
    pub left_angles: Vec<f64>,
    /// Per-index angle planted on each right singular vector.
    pub right_angles: Vec<f64>,
}

/// `m × n` pair (`m ≥ n + head`, `head ≥ 2`) with well separated singular
/// values. Each head left vector `u_i` is tilted by `theta` toward an
/// orthogonal-complement direction; the right vectors `v_0, v_1` are rotated
/// within their own plane by `theta`. Target singular values differ from
/// base by at most `jitter`.
pub fn planted_pair(m: usize, n: usize, head: usize, theta: f64, jitter: f64, seed: u64) -> PlantedPair {
    assert!(head >= 2 && m >= n + head);
    let mut g = rng(seed);
    let uq = orthonormal(m, n + head, &mut g);
    let vq = orthonormal(n, n, &mut g);
    let sigma_base: Vec<f64> = (0..n).map(|i| 1.0 + 0.25 * (n - i) as f64).collect();
    let sigma_target: Vec<f64> = sigma_base
        .iter()
        .map(|s| s + jitter * (2.0 * g.gen::<f64>() - 1.0))
        .collect();

    let u_base = uq.columns_range(0, n);
    let mut u_t = uq.clone();
    for i in 0..head {
        givens_columns(&mut u_t, i, n + i, theta);
    }
    let u_tgt = u_t.columns_range(0, n);
    let mut v_tgt = vq.clone();
    givens_columns(&mut v_tgt, 0, 1, theta);

    let mut left_angles = vec![0.0; n];
    left_angles[..head].iter_mut().for_each(|a| *a = theta);
    let mut right_angles = vec![0.0; n];
    right_angles[0] = theta;
    right_angles[1] = theta;

    PlantedPair {
        base: compose(&u_base, &sigma_base, &vq),
        target: compose(&u_tgt, &sigma_target, &v_tgt),
        sigma_base,
        sigma_target,
        left_angles,
        right_angles,
    }
}

pub fn record(name: &str, m: &Matrix64, dtype: DType) -> TensorRecord {
    TensorRecord::from_matrix(name, m, dtype)
}

/// A small decoder-style model: per layer q/k/v/o projections, one MLP
/// matrix, a layer-norm vector; plus embedding and output head.
pub struct SyntheticModel {
    pub base: Checkpoint,
    pub target: Checkpoint,
    /// `(tensor name, planted pair)` for every projection matrix.
    pub pairs: Vec<(String, PlantedPair)>,
}

pub const PROJECTIONS: [&str; 5] = [
    "self_attn.q_proj",
    "self_attn.k_proj",
    "self_attn.v_proj",
    "self_attn.o_proj",
    "mlp.up_proj",
];

pub fn synthetic_model(layers: usize, m: usize, n: usize, head: usize, theta: f64, seed: u64) -> SyntheticModel {
    let mut base = Vec::new();
    let mut target = Vec::new();
    let mut pairs = Vec::new();
    let mut g = rng(seed ^ 0x5eed);
    let embed_b = gaussian(m, n, &mut g);
    let embed_t = &embed_b + &gaussian(m, n, &mut g).scale(1e-3);
    base.push(record("model.embed_tokens.weight", &embed_b, DType::F64));
    target.push(record("model.embed_tokens.weight", &embed_t, DType::F64));
    for l in 0..layers {
        for (p, proj) in PROJECTIONS.iter().enumerate() {
            let name = format!("model.layers.{l}.{proj}.weight");
            let pair = planted_pair(m, n, head, theta, 0.005, seed + (l * 16 + p) as u64);
            base.push(record(&name, &pair.base, DType::F64));
            target.push(record(&name, &pair.target, DType::F64));
            pairs.push((name, pair));
        }
        let norm_name = format!("model.layers.{l}.input_layernorm.weight");
        let norm: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * i as f64).collect();
        base.push(TensorRecord::new(&norm_name, vec![n], DType::F64, norm.clone()).unwrap());
        let shifted: Vec<f64> = norm.iter().map(|x| x + 0.5).collect();
        target.push(TensorRecord::new(&norm_name, vec![n], DType::F64, shifted).unwrap());
    }
    let head_b = gaussian(m, n, &mut g);
    let head_t = &head_b + &gaussian(m, n, &mut g).scale(1e-3);
    base.push(record("lm_head.weight", &head_b, DType::F64));
    target.push(record("lm_head.weight", &head_t, DType::F64));
    SyntheticModel {
        base: Checkpoint::new(base, BTreeMap::new()).unwrap(),
        target: Checkpoint::new(target, BTreeMap::new()).unwrap(),
        pairs,
    }
}

pub fn rel_err(a: &Matrix64, b: &Matrix64) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm()
}
