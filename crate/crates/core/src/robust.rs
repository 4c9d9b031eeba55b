//! Robust means and covariance estimators for heavy-tailed data.
//!
//! Data matrices are `p × n`: each column is one observation.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{FarmError, Result};
use crate::linalg::{check_finite, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovMethod {
    Sample,
    ElementwiseTruncated,
    L4Shrinkage,
    UStatistic,
    Poet,
    ObservedFactor,
}

/// A symmetric covariance estimate tagged with how it was produced.
#[derive(Debug, Clone, Serialize)]
pub struct CovEstimate {
    #[serde(skip)]
    pub matrix: Matrix,
    pub method: CovMethod,
    pub params: BTreeMap<String, f64>,
}

impl CovEstimate {
    pub fn new(matrix: Matrix, method: CovMethod) -> Self {
        Self {
            matrix,
            method,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_owned(), value);
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberConfig {
    pub tau: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl HuberConfig {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            max_iters: 100,
            tol: 1e-10,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(FarmError::param(format!("huber tau must be positive, got {}", self.tau)));
        }
        if !(self.tol > 0.0) {
            return Err(FarmError::param("huber tol must be positive"));
        }
        Ok(())
    }
}

fn require_samples(n: usize, needed: usize) -> Result<()> {
    if n < needed {
        return Err(FarmError::InsufficientSamples { needed, got: n });
    }
    Ok(())
}

fn require_finite(x: &[f64], what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FarmError::NonFinite(what))
    }
}

/// Row means of a `p × n` matrix.
pub fn sample_mean(x: &Matrix) -> Result<Vector> {
    require_samples(x.ncols(), 1)?;
    check_finite(x, "data")?;
    Ok(x.column_mean())
}

/// `n⁻¹ Σ (x_i − μ̂)(x_i − μ̂)ᵀ`, with `μ̂ = 0` unless `demean`.
pub fn sample_cov(x: &Matrix, demean: bool) -> Result<CovEstimate> {
    let n = x.ncols();
    require_samples(n, if demean { 2 } else { 1 })?;
    check_finite(x, "data")?;
    let centered = if demean { center_rows(x) } else { x.clone() };
    let mut s = &centered * centered.transpose() / n as f64;
    force_symmetric(&mut s);
    Ok(CovEstimate::new(s, CovMethod::Sample).with_param("demean", demean as u8 as f64))
}

pub(crate) fn center_rows(x: &Matrix) -> Matrix {
    let mu = x.column_mean();
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        col -= &mu;
    }
    c
}

pub(crate) fn force_symmetric(s: &mut Matrix) {
    let n = s.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
}

/// Mean of `sign(x_i)·min(|x_i|, τ)`. `τ = ∞` gives the sample mean.
pub fn truncated_mean(x: &[f64], tau: f64) -> Result<f64> {
    require_samples(x.len(), 1)?;
    require_finite(x, "truncated mean input")?;
    if !(tau > 0.0) {
        return Err(FarmError::param(format!("tau must be positive, got {tau}")));
    }
    Ok(x.iter().map(|v| v.clamp(-tau, tau)).sum::<f64>() / x.len() as f64)
}

fn huber_score(x: &[f64], theta: f64, tau: f64) -> (f64, usize) {
    let mut score = 0.0;
    let mut inside = 0;
    for &v in x {
        let r = v - theta;
        if r.abs() <= tau {
            score += r;
            inside += 1;
        } else {
            score += tau.copysign(r);
        }
    }
    (score, inside)
}

/// Minimizer of `Σ ℓ_τ(x_i − θ)` for the Huber loss `ℓ_τ`.
///
/// The score `Σ ψ_τ(x_i − θ)` is monotone and piecewise linear in `θ`, so
/// Newton steps inside a shrinking bracket land on the exact root; steps
/// that leave the bracket, or flat pieces, fall back to bisection.
pub fn huber_mean(x: &[f64], cfg: &HuberConfig) -> Result<f64> {
    require_samples(x.len(), 1)?;
    require_finite(x, "huber input")?;
    cfg.validate()?;
    let n = x.len() as f64;
    if cfg.tau.is_infinite() {
        return Ok(x.iter().sum::<f64>() / n);
    }
    let (mut lo, mut hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo == hi {
        return Ok(lo);
    }
    let mut theta = median(x);
    let scale = hi - lo;
    for _ in 0..cfg.max_iters {
        let (score, inside) = huber_score(x, theta, cfg.tau);
        if score == 0.0 {
            return Ok(theta);
        }
        if score > 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        let newton = if inside > 0 { theta + score / inside as f64 } else { f64::NAN };
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (next - theta).abs();
        theta = next;
        if step <= cfg.tol * (scale + theta.abs()) || hi - lo <= cfg.tol * (scale + theta.abs()) {
            return Ok(theta);
        }
    }
    let (residual, _) = huber_score(x, theta, cfg.tau);
    Err(FarmError::Convergence {
        what: "huber mean",
        iterations: cfg.max_iters,
        residual,
    })
}

pub(crate) fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// `scale·√(n / ln(n p))`.
pub fn default_tau(n: usize, p: usize, scale: f64) -> Result<f64> {
    let l = ((n as f64) * (p as f64)).ln();
    if n == 0 || p == 0 || l <= 1.0 {
        return Err(FarmError::param(format!(
            "default tau needs ln(n·p) > 1 (n = {n}, p = {p})"
        )));
    }
    if !(scale > 0.0) {
        return Err(FarmError::param("tau scale must be positive"));
    }
    Ok(scale * (n as f64 / l).sqrt())
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Truncated mean with `τ = tau_scale · RMS(x) · √n`; a zero sequence is
/// left untruncated.
fn adaptive_truncated_mean(x: &[f64], tau_scale: f64) -> f64 {
    let tau = tau_scale * rms(x) * (x.len() as f64).sqrt();
    if tau > 0.0 {
        x.iter().map(|v| v.clamp(-tau, tau)).sum::<f64>() / x.len() as f64
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Default multiplier for [`elementwise_robust_cov`].
pub const DEFAULT_ELEMENTWISE_TAU_SCALE: f64 = 0.6;

/// Covariance whose entries `E[X_j X_k] − E[X_j] E[X_k]` are each estimated
/// by truncated means. Each sequence gets its own level
/// `τ = tau_scale · RMS(sequence) · √n`.
pub fn elementwise_robust_cov(x: &Matrix, tau_scale: f64) -> Result<CovEstimate> {
    let (p, n) = x.shape();
    require_samples(n, 2)?;
    check_finite(x, "data")?;
    if !(tau_scale > 0.0) {
        return Err(FarmError::param("tau scale must be positive"));
    }
    let rows: Vec<Vec<f64>> = (0..p).map(|j| x.row(j).iter().copied().collect()).collect();
    let means: Vec<f64> = rows.iter().map(|r| adaptive_truncated_mean(r, tau_scale)).collect();
    let mut s = Matrix::zeros(p, p);
    let mut prod = vec![0.0; n];
    for j in 0..p {
        for k in j..p {
            for (i, v) in prod.iter_mut().enumerate() {
                *v = rows[j][i] * rows[k][i];
            }
            let second = adaptive_truncated_mean(&prod, tau_scale);
            let c = second - means[j] * means[k];
            s[(j, k)] = c;
            s[(k, j)] = c;
        }
    }
    Ok(CovEstimate::new(s, CovMethod::ElementwiseTruncated).with_param("tau_scale", tau_scale))
}

/// `n⁻¹ Σ x̃_i x̃_iᵀ` with `x̃_i = (‖x_i‖₄ ∧ τ) x_i / ‖x_i‖₄`. The caller is
/// responsible for centering.
pub fn shrinkage_cov(x: &Matrix, tau: f64) -> Result<CovEstimate> {
    let n = x.ncols();
    require_samples(n, 1)?;
    check_finite(x, "data")?;
    if !(tau > 0.0) {
        return Err(FarmError::param(format!("tau must be positive, got {tau}")));
    }
    let mut shrunk = x.clone();
    for mut col in shrunk.column_iter_mut() {
        let norm4 = col.iter().map(|v| v.powi(4)).sum::<f64>().powf(0.25);
        if norm4 == 0.0 {
            continue;
        }
        if norm4 > tau {
            col *= tau / norm4;
        }
    }
    let mut s = &shrunk * shrunk.transpose() / n as f64;
    force_symmetric(&mut s);
    Ok(CovEstimate::new(s, CovMethod::L4Shrinkage).with_param("tau", tau))
}

/// `(n R̂ / (δ ln p))^{1/4}` with `R̂ = max_j n⁻¹ Σ_i x_{ji}⁴`, a coordinate-wise
/// proxy for the fourth-moment bound.
pub fn default_shrinkage_tau(x: &Matrix, delta: f64) -> Result<f64> {
    let (p, n) = x.shape();
    if p < 2 {
        return Err(FarmError::param("shrinkage tau needs p ≥ 2"));
    }
    require_samples(n, 1)?;
    check_finite(x, "data")?;
    let r_hat = x
        .row_iter()
        .map(|r| r.iter().map(|v| v.powi(4)).sum::<f64>() / n as f64)
        .fold(0.0, f64::max);
    Ok(shrinkage_tau_formula(n, p, r_hat, delta))
}

pub(crate) fn shrinkage_tau_formula(n: usize, p: usize, r_hat: f64, delta: f64) -> f64 {
    (n as f64 * r_hat / (delta * (p as f64).ln())).powf(0.25)
}

/// `2 tr(S) · √(n / ln p)` for the U-statistic covariance, where `2 tr(S)` is
/// the average squared distance between two observations. Pairs further
/// apart than this are shrunk.
pub fn default_ustat_tau(x: &Matrix) -> Result<f64> {
    let (p, n) = x.shape();
    if p < 2 {
        return Err(FarmError::param("U-statistic tau needs p ≥ 2"));
    }
    require_samples(n, 2)?;
    let trace = sample_cov(x, true)?.matrix.trace();
    if trace == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 * trace * (n as f64 / (p as f64).ln()).sqrt())
}

/// Shrunk U-statistic covariance
/// `Σ_{j<k} min(1, τ/‖x_j − x_k‖²)(x_j − x_k)(x_j − x_k)ᵀ / (2·C(n,2))`.
///
/// Written as `X L Xᵀ` for the graph Laplacian `L` of the pair weights, so
/// no pair differences are materialized.
pub fn ustat_cov(x: &Matrix, tau: f64) -> Result<CovEstimate> {
    let (p, n) = x.shape();
    require_samples(n, 2)?;
    check_finite(x, "data")?;
    if !(tau > 0.0) {
        return Err(FarmError::param(format!("tau must be positive, got {tau}")));
    }
    let gram = x.transpose() * x;
    let mut lap = Matrix::zeros(n, n);
    for j in 0..n {
        for k in (j + 1)..n {
            let d2 = (gram[(j, j)] + gram[(k, k)] - 2.0 * gram[(j, k)]).max(0.0);
            let w = if d2 > tau { tau / d2 } else { 1.0 };
            lap[(j, k)] = -w;
            lap[(k, j)] = -w;
            lap[(j, j)] += w;
            lap[(k, k)] += w;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let mut s = if p == 0 {
        Matrix::zeros(0, 0)
    } else {
        x * lap * x.transpose() / (2.0 * pairs)
    };
    force_symmetric(&mut s);
    Ok(CovEstimate::new(s, CovMethod::UStatistic).with_param("tau", tau))
}
