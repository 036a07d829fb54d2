//! Numerical lab for rotation-gauge updates of a two-matrix linear chain.
//!
//! Row-vector convention: an input row `x` maps to `x · w1 · w2` with
//! `w1: d_in × d_mid` and `w2: d_mid × d_out`. A skew generator `a` on the
//! bottleneck gives the update `w1 ← w1 (I + ηa)`, `w2 ← (I − ηa) w2`,
//! which leaves the composite unchanged up to `−η² w1 a² w2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{compute_svd, random_skew, reconstruct_with, skew_exp, LinalgError};
use crate::matrix::Matrix;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum GaugeError {
    #[error("generator is not skew-symmetric (defect {0:e})")]
    NotSkew(f64),
    #[error("step size {0} outside [0, 1)")]
    BadEta(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("degenerate fit: need at least 3 step sizes, have {0}")]
    DegenerateFit(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_eta(eta: f64) -> Result<(), GaugeError> {
    if !(0.0..1.0).contains(&eta) {
        return Err(GaugeError::BadEta(eta));
    }
    Ok(())
}

fn check_skew<T: Real>(a: &Matrix<T>) -> Result<(), GaugeError> {
    if !a.is_square() {
        return Err(GaugeError::Shape(format!("generator is {:?}", a.shape())));
    }
    let d = a.skew_defect();
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(4.0));
    if !(d <= tol) {
        return Err(GaugeError::NotSkew(d.as_f64()));
    }
    Ok(())
}

/// One gauge update: `(w1 (I + ηa), (I − ηa) w2)`.
pub fn gauge_step<T: Real>(w1: &Matrix<T>, w2: &Matrix<T>, a: &Matrix<T>, eta: T) -> Result<(Matrix<T>, Matrix<T>), GaugeError> {
    check_eta(eta.as_f64())?;
    check_skew(a)?;
    let d = a.rows();
    if w1.cols() != d || w2.rows() != d {
        return Err(GaugeError::Shape(format!(
            "w1 {:?}, w2 {:?}, generator {d}x{d}",
            w1.shape(),
            w2.shape()
        )));
    }
    let eye = Matrix::identity(d);
    let step = a.scale(eta);
    let right = &eye + &step;
    let left = &eye - &step;
    Ok((w1.matmul(&right), left.matmul(w2)))
}

/// `‖w1′ − w1‖_F² + ‖w2′ − w2‖_F²`.
pub fn parameter_cost<T: Real>(w1: &Matrix<T>, w2: &Matrix<T>, w1p: &Matrix<T>, w2p: &Matrix<T>) -> Result<T, GaugeError> {
    if w1.shape() != w1p.shape() || w2.shape() != w2p.shape() {
        return Err(GaugeError::Shape(format!(
            "({:?}, {:?}) vs ({:?}, {:?})",
            w1.shape(),
            w2.shape(),
            w1p.shape(),
            w2p.shape()
        )));
    }
    Ok((w1p - w1).frobenius_norm_sq() + (w2p - w2).frobenius_norm_sq())
}

/// Closed form of the gauge cost: `η² · trace(aᵀw1ᵀw1a + a w2 w2ᵀ aᵀ)`.
pub fn trace_identity<T: Real>(w1: &Matrix<T>, w2: &Matrix<T>, a: &Matrix<T>, eta: T) -> T {
    let w1a = w1.matmul(a);
    let aw2 = a.matmul(w2);
    let first = w1a.tr_matmul(&w1a).trace();
    let second = aw2.matmul(&aw2.transpose()).trace();
    eta * eta * (first + second)
}

/// Shifts every singular value of `w` by `η`: `U · diag(σ + η) · Vᵀ`.
pub fn sigma_perturb_step<T: Real>(w: &Matrix<T>, eta: T) -> Result<Matrix<T>, GaugeError> {
    check_eta(eta.as_f64())?;
    let f = compute_svd(w)?;
    let shifted: Vec<T> = f.sigma.iter().map(|&s| s + eta).collect();
    Ok(reconstruct_with(&f.u, &shifted, &f.v))
}

/// Naive product of first-order rotations next to the exact exponential.
#[derive(Clone, Debug)]
pub struct RotationAccumulation<T> {
    /// `Π_t (I + η a_t)`, in list order.
    pub product: Matrix<T>,
    /// `exp(Σ_t η a_t)`.
    pub exponential: Matrix<T>,
    /// `‖PᵀP − I‖_F` for the product.
    pub product_defect: T,
    pub exponential_defect: T,
    /// `‖product − exponential‖_F`.
    pub gap: T,
}

pub fn accumulate_rotations<T: Real>(a_list: &[Matrix<T>], eta: T) -> Result<RotationAccumulation<T>, GaugeError> {
    check_eta(eta.as_f64())?;
    let first = a_list
        .first()
        .ok_or_else(|| GaugeError::Config("empty generator list".into()))?;
    let d = first.rows();
    let eye = Matrix::identity(d);
    let mut product = eye.clone();
    let mut sum = Matrix::zeros(d, d);
    for a in a_list {
        check_skew(a)?;
        if a.shape() != (d, d) {
            return Err(GaugeError::Shape("generators differ in size".into()));
        }
        let step = a.scale(eta);
        product = product.matmul(&(&eye + &step));
        sum = &sum + &step;
    }
    let exponential = skew_exp(&sum)?;
    Ok(RotationAccumulation {
        product_defect: product.orthonormality_defect(),
        exponential_defect: exponential.orthonormality_defect(),
        gap: (&product - &exponential).frobenius_norm(),
        product,
        exponential,
    })
}

/// Configuration of [`scaling_experiment`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeConfig {
    pub d_in: usize,
    pub d_mid: usize,
    pub d_out: usize,
    pub eta_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Weight-decay coefficient for the penalty comparison.
    pub lambda: f64,
}

impl Default for GaugeConfig {
    fn default() -> Self {
        Self {
            d_in: 8,
            d_mid: 16,
            d_out: 8,
            eta_grid: vec![1e-1, 1e-2, 1e-3, 1e-4],
            trials: 32,
            seed: 0,
            lambda: 1e-2,
        }
    }
}

impl GaugeConfig {
    pub fn validate(&self) -> Result<(), GaugeError> {
        if self.eta_grid.len() < 3 {
            return Err(GaugeError::DegenerateFit(self.eta_grid.len()));
        }
        if self.eta_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(GaugeError::Config("every step size must lie in (0, 1)".into()));
        }
        if self.eta_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(GaugeError::Config("step sizes must be strictly decreasing".into()));
        }
        if self.d_mid < 2 || self.d_in == 0 || self.d_out == 0 {
            return Err(GaugeError::Config("need d_mid >= 2 and positive d_in, d_out".into()));
        }
        if self.trials == 0 {
            return Err(GaugeError::Config("need at least one trial".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(GaugeError::Config("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Trial means at one step size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaRow {
    pub eta: f64,
    /// `‖Δw1‖_F² + ‖Δw2‖_F²` for the gauge update.
    pub mean_cost_gauge: f64,
    /// `‖Δw1‖_F²` for the singular-value shift of `w1`.
    pub mean_cost_sigma: f64,
    /// `‖ΔΣ‖_F` of the singular-value shift.
    pub mean_delta_sigma_norm: f64,
    /// `‖w1′w2′ − w1w2‖_F` for the gauge update.
    pub mean_drift: f64,
    /// `max_i |σ_i(w1′) − σ_i(w1)|` for the gauge update.
    pub mean_gauge_sigma_shift: f64,
    /// `λ · |Δ(‖w1‖² + ‖w2‖²)|` for the gauge update.
    pub mean_penalty_gauge: f64,
    /// `λ · |Δ‖w1‖²|` for the singular-value shift.
    pub mean_penalty_sigma: f64,
    pub penalty_ratio: f64,
    /// Largest relative gap between measured cost and the trace identity.
    pub trace_residual_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub cost_gauge: f64,
    pub drift: f64,
    pub delta_sigma: f64,
    pub cost_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub config: GaugeConfig,
    pub rows: Vec<EtaRow>,
    /// Least-squares slopes of `log(metric)` against `log(η)`.
    pub slopes: Slopes,
    pub trace_residual_max: f64,
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

fn gaussian<T: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<T> {
    let m = Matrix::from_fn(rows, cols, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        T::lit(x)
    });
    let n = m.frobenius_norm();
    m.scale(T::one() / n)
}

struct Trial<T> {
    w1: Matrix<T>,
    w2: Matrix<T>,
    a: Matrix<T>,
}

#[derive(Default, Clone, Copy)]
struct TrialMetrics {
    cost_gauge: f64,
    cost_sigma: f64,
    delta_sigma: f64,
    drift: f64,
    gauge_sigma_shift: f64,
    penalty_gauge: f64,
    penalty_sigma: f64,
    trace_residual: f64,
}

fn run_trial<T: Real>(t: &Trial<T>, eta: f64, lambda: f64) -> Result<TrialMetrics, GaugeError> {
    let e = T::lit(eta);
    let (w1p, w2p) = gauge_step(&t.w1, &t.w2, &t.a, e)?;
    let cost = parameter_cost(&t.w1, &t.w2, &w1p, &w2p)?;
    let closed = trace_identity(&t.w1, &t.w2, &t.a, e);
    let trace_residual = ((cost - closed).abs() / closed).as_f64();
    let drift = (&w1p.matmul(&w2p) - &t.w1.matmul(&t.w2)).frobenius_norm();

    let s0 = compute_svd(&t.w1)?.sigma;
    let s_gauge = compute_svd(&w1p)?.sigma;
    let gauge_sigma_shift = s0
        .iter()
        .zip(&s_gauge)
        .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));

    let ws = sigma_perturb_step(&t.w1, e)?;
    let s_shift = compute_svd(&ws)?.sigma;
    let delta_sigma = s0
        .iter()
        .zip(&s_shift)
        .map(|(&a, &b)| (b - a) * (b - a))
        .sum::<T>()
        .sqrt();
    let cost_sigma = (&ws - &t.w1).frobenius_norm_sq();

    let base_norm = t.w1.frobenius_norm_sq() + t.w2.frobenius_norm_sq();
    let gauge_norm = w1p.frobenius_norm_sq() + w2p.frobenius_norm_sq();
    let penalty_gauge = lambda * (gauge_norm - base_norm).as_f64().abs();
    let penalty_sigma = lambda * (ws.frobenius_norm_sq() - t.w1.frobenius_norm_sq()).as_f64().abs();

    Ok(TrialMetrics {
        cost_gauge: cost.as_f64(),
        cost_sigma: cost_sigma.as_f64(),
        delta_sigma: delta_sigma.as_f64(),
        drift: drift.as_f64(),
        gauge_sigma_shift: gauge_sigma_shift.as_f64(),
        penalty_gauge,
        penalty_sigma,
        trace_residual,
    })
}

/// Measures how gauge-update cost and forward drift scale with `η`
/// against a direct singular-value shift, over seeded random trials.
///
/// Trial matrices have unit Frobenius norm. Results depend only on the
/// config (trials run in parallel, but sums are taken in trial order).
pub fn scaling_experiment<T: Real>(config: &GaugeConfig) -> Result<ScalingResult, GaugeError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let trials: Vec<Trial<T>> = (0..config.trials)
        .map(|_| {
            let w1 = gaussian(&mut rng, config.d_in, config.d_mid);
            let w2 = gaussian(&mut rng, config.d_mid, config.d_out);
            let a: Matrix<T> = random_skew(config.d_mid, rng.gen());
            let n = a.frobenius_norm();
            Trial {
                w1,
                w2,
                a: a.scale(T::one() / n),
            }
        })
        .collect();

    let mut rows = Vec::with_capacity(config.eta_grid.len());
    for &eta in &config.eta_grid {
        let metrics: Vec<TrialMetrics> = trials
            .par_iter()
            .map(|t| run_trial(t, eta, config.lambda))
            .collect::<Result<_, _>>()?;
        let n = metrics.len() as f64;
        let mut sum = TrialMetrics::default();
        let mut residual_max: f64 = 0.0;
        for m in &metrics {
            sum.cost_gauge += m.cost_gauge;
            sum.cost_sigma += m.cost_sigma;
            sum.delta_sigma += m.delta_sigma;
            sum.drift += m.drift;
            sum.gauge_sigma_shift += m.gauge_sigma_shift;
            sum.penalty_gauge += m.penalty_gauge;
            sum.penalty_sigma += m.penalty_sigma;
            residual_max = residual_max.max(m.trace_residual);
        }
        rows.push(EtaRow {
            eta,
            mean_cost_gauge: sum.cost_gauge / n,
            mean_cost_sigma: sum.cost_sigma / n,
            mean_delta_sigma_norm: sum.delta_sigma / n,
            mean_drift: sum.drift / n,
            mean_gauge_sigma_shift: sum.gauge_sigma_shift / n,
            mean_penalty_gauge: sum.penalty_gauge / n,
            mean_penalty_sigma: sum.penalty_sigma / n,
            penalty_ratio: if sum.penalty_sigma > 0.0 {
                sum.penalty_gauge / sum.penalty_sigma
            } else {
                f64::NAN
            },
            trace_residual_max: residual_max,
        });
    }

    let xs: Vec<f64> = rows.iter().map(|r| r.eta.ln()).collect();
    let slope = |f: fn(&EtaRow) -> f64| {
        let ys: Vec<f64> = rows.iter().map(|r| f(r).ln()).collect();
        fit_slope(&xs, &ys)
    };
    let slopes = Slopes {
        cost_gauge: slope(|r| r.mean_cost_gauge),
        drift: slope(|r| r.mean_drift),
        delta_sigma: slope(|r| r.mean_delta_sigma_norm),
        cost_sigma: slope(|r| r.mean_cost_sigma),
    };
    let trace_residual_max = rows.iter().map(|r| r.trace_residual_max).fold(0.0, f64::max);
    Ok(ScalingResult {
        config: config.clone(),
        rows,
        slopes,
        trace_residual_max,
    })
}

/// Outcome of re-aligning a rotated two-layer chain with Procrustes.
#[derive(Clone, Debug)]
pub struct AlignmentDemo<T> {
    pub rotation_true: Matrix<T>,
    pub rotation_est: Matrix<T>,
    /// `‖R̂ − R‖_F`.
    pub rotation_error: T,
    /// `‖w1_aligned − w1‖_F² + ‖w2_aligned − w2‖_F²`.
    pub aligned_delta: T,
    /// `max |x w1 w2 − x w1_aligned w2_aligned|` over the sample inputs.
    pub max_output_diff: T,
}

/// Rotates the chain `(w1, w2)` by `angle` radians in its first bottleneck
/// plane, estimates the rotation back with Procrustes, undoes it and
/// compares forward outputs on `samples` seeded random inputs.
pub fn procrustes_alignment_demo<T: Real>(
    w1: &Matrix<T>,
    w2: &Matrix<T>,
    angle: f64,
    samples: usize,
    seed: u64,
) -> Result<AlignmentDemo<T>, GaugeError> {
    let d = w1.cols();
    if d < 2 || w2.rows() != d {
        return Err(GaugeError::Shape(format!("w1 {:?}, w2 {:?}", w1.shape(), w2.shape())));
    }
    let (c, s) = (T::lit(angle.cos()), T::lit(angle.sin()));
    let mut r = Matrix::identity(d);
    r[(0, 0)] = c;
    r[(0, 1)] = -s;
    r[(1, 0)] = s;
    r[(1, 1)] = c;

    let w1_rot = w1.matmul(&r);
    let w2_rot = r.transpose().matmul(w2);
    let est = crate::linalg::procrustes_rotation(w1, &w1_rot)?.rotation;
    let w1_al = w1_rot.matmul(&est.transpose());
    let w2_al = est.matmul(&w2_rot);

    let aligned_delta = (&w1_al - w1).frobenius_norm_sq() + (&w2_al - w2).frobenius_norm_sq();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Matrix<T> = Matrix::from_fn(samples, w1.rows(), |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        T::lit(v)
    });
    let out_base = x.matmul(w1).matmul(w2);
    let out_al = x.matmul(&w1_al).matmul(&w2_al);
    Ok(AlignmentDemo {
        rotation_error: (&est - &r).frobenius_norm(),
        rotation_true: r,
        rotation_est: est,
        aligned_delta,
        max_output_diff: (&out_al - &out_base).max_abs(),
    })
}
