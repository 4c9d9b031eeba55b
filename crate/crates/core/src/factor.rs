//! PCA factor extraction and estimators of the number of factors.

use serde::Serialize;

use crate::error::{FarmError, Result};
use crate::linalg::{check_finite, eig_sym, sym_spectral_norm, Matrix, Vector};
use crate::robust::{sample_cov, sample_mean};

pub const DEFAULT_K_MAX: usize = 15;

/// Estimated factor model `X = μ̂1ᵀ + B̂F̂ᵀ + Û`.
#[derive(Debug, Clone)]
pub struct FactorFit {
    pub mu_hat: Vector,
    /// `p × K` loadings.
    pub b_hat: Matrix,
    /// `n × K` factors.
    pub f_hat: Matrix,
    /// `p × n` idiosyncratic residuals.
    pub u_hat: Matrix,
    /// Leading `K` eigenvalues of the covariance input.
    pub eigvals: Vector,
    /// Leading `K` eigenvectors of the covariance input.
    pub eigvecs: Matrix,
}

impl FactorFit {
    pub fn k(&self) -> usize {
        self.b_hat.ncols()
    }
}

/// Factors from the top-`k` eigenpairs `(Λ̂, V̂)` of `sigma_hat`:
/// `B̂ = V̂Λ̂^{1/2}`, `F̂ = (X − μ̂1ᵀ)ᵀV̂Λ̂^{−1/2}`.
pub fn fit_pca_factors(sigma_hat: &Matrix, mu_hat: &Vector, x: &Matrix, k: usize) -> Result<FactorFit> {
    let (p, n) = x.shape();
    if sigma_hat.nrows() != p || mu_hat.len() != p {
        return Err(FarmError::dim(format!(
            "covariance {}x{}, mean {}, data {p}x{n}",
            sigma_hat.nrows(),
            sigma_hat.ncols(),
            mu_hat.len()
        )));
    }
    if k == 0 || k > p {
        return Err(FarmError::param(format!("K = {k} must lie in [1, {p}]")));
    }
    check_finite(x, "data")?;
    let eig = eig_sym(sigma_hat)?;
    let lambda = eig.values.rows(0, k).into_owned();
    if lambda[k - 1] <= 0.0 {
        return Err(FarmError::RankDeficient(format!(
            "eigenvalue {k} of the covariance is {:e}",
            lambda[k - 1]
        )));
    }
    let v = eig.vectors.columns(0, k).into_owned();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= mu_hat;
    }
    let mut b_hat = v.clone();
    let mut scores = centered.transpose() * &v;
    for j in 0..k {
        let s = lambda[j].sqrt();
        b_hat.column_mut(j).scale_mut(s);
        scores.column_mut(j).unscale_mut(s);
    }
    let u_hat = centered - &b_hat * scores.transpose();
    Ok(FactorFit {
        mu_hat: mu_hat.clone(),
        b_hat,
        f_hat: scores,
        u_hat,
        eigvals: lambda,
        eigvecs: v,
    })
}

/// [`fit_pca_factors`] on the sample mean and (demeaned) sample covariance.
pub fn pca_factors(x: &Matrix, k: usize) -> Result<FactorFit> {
    let mu = sample_mean(x)?;
    let s = sample_cov(x, true)?;
    fit_pca_factors(&s.matrix, &mu, x, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KMethod {
    Ratio,
    Difference,
    InfoCriterion,
}

/// Outcome of a number-of-factors estimator. `criterion[i]` is the value
/// attached to candidate `i` (ratio or gap for `i = 1..=k_max` stored at
/// index `i − 1`; penalized loss for `k = 0..=k_max` at index `k`).
#[derive(Debug, Clone, Serialize)]
pub struct KSelection {
    pub k_hat: usize,
    pub method: KMethod,
    pub eigenvalues: Vec<f64>,
    pub criterion: Vec<f64>,
}

fn check_spectrum(eigvals: &[f64], k_max: usize) -> Result<()> {
    if k_max == 0 {
        return Err(FarmError::param("k_max must be at least 1"));
    }
    if k_max + 1 > eigvals.len() {
        return Err(FarmError::param(format!(
            "k_max = {k_max} needs at least {} eigenvalues, got {}",
            k_max + 1,
            eigvals.len()
        )));
    }
    if eigvals.iter().any(|v| !v.is_finite()) {
        return Err(FarmError::NonFinite("eigenvalues"));
    }
    Ok(())
}

/// `argmax_{i ≤ k_max} λ_i / λ_{i+1}`, with denominators floored at
/// `1e-12·λ₁`; ties go to the smallest `i`.
pub fn k_ratio(eigvals: &[f64], k_max: usize) -> Result<KSelection> {
    check_spectrum(eigvals, k_max)?;
    let top = eigvals[0];
    // Rank-deficient sample covariances carry roundoff-level negatives.
    if eigvals.iter().any(|&v| v < -1e-10 * top.abs().max(f64::MIN_POSITIVE)) {
        return Err(FarmError::param("eigenvalues must be nonnegative"));
    }
    if top <= 0.0 {
        return Err(FarmError::pre("all eigenvalues are zero"));
    }
    let floor = 1e-12 * top;
    let criterion: Vec<f64> = (0..k_max)
        .map(|i| eigvals[i].max(floor) / eigvals[i + 1].max(floor))
        .collect();
    let mut best = 0;
    for (i, &r) in criterion.iter().enumerate() {
        if r > criterion[best] {
            best = i;
        }
    }
    Ok(KSelection {
        k_hat: best + 1,
        method: KMethod::Ratio,
        eigenvalues: eigvals.to_vec(),
        criterion,
    })
}

/// `max{i ≤ k_max : λ_i − λ_{i+1} ≥ δ}`, or 0 when no gap qualifies.
pub fn k_diff(eigvals: &[f64], delta: f64, k_max: usize) -> Result<KSelection> {
    check_spectrum(eigvals, k_max)?;
    if !(delta > 0.0) {
        return Err(FarmError::param("delta must be positive"));
    }
    let criterion: Vec<f64> = (0..k_max).map(|i| eigvals[i] - eigvals[i + 1]).collect();
    let k_hat = criterion
        .iter()
        .rposition(|&g| g >= delta)
        .map_or(0, |i| i + 1);
    Ok(KSelection {
        k_hat,
        method: KMethod::Difference,
        eigenvalues: eigvals.to_vec(),
        criterion,
    })
}

/// `argmin_{0 ≤ k ≤ k_max} V(k) + k σ̂² g(n, p)` with `V(k) = p⁻¹ Σ_{j>k} λ_j`
/// and `g = ((n+p)/(np)) ln(np/(n+p))`. `σ̂²` defaults to `V(k_max)`.
pub fn k_info(eigvals: &[f64], n: usize, p: usize, k_max: usize, sigma2_hat: Option<f64>) -> Result<KSelection> {
    check_spectrum(eigvals, k_max)?;
    if k_max + 1 > n.min(p) {
        return Err(FarmError::param(format!(
            "k_max = {k_max} must be below min(n, p) = {}",
            n.min(p)
        )));
    }
    let pf = p as f64;
    let nf = n as f64;
    let tail = |k: usize| eigvals[k..].iter().sum::<f64>() / pf;
    let sigma2 = match sigma2_hat {
        Some(s) if s < 0.0 || !s.is_finite() => {
            return Err(FarmError::param("sigma2_hat must be a nonnegative number"))
        }
        Some(s) => s,
        None => tail(k_max),
    };
    let g = (nf + pf) / (nf * pf) * (nf * pf / (nf + pf)).ln();
    let criterion: Vec<f64> = (0..=k_max).map(|k| tail(k) + k as f64 * sigma2 * g).collect();
    let mut best = 0;
    for (k, &c) in criterion.iter().enumerate() {
        if c < criterion[best] {
            best = k;
        }
    }
    Ok(KSelection {
        k_hat: best,
        method: KMethod::InfoCriterion,
        eigenvalues: eigvals.to_vec(),
        criterion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pervasiveness {
    pub min_spike: f64,
    pub noise_norm: f64,
    pub ratio: f64,
}

/// Smallest eigenvalue of `B̂ᵀB̂` against `‖Σ̂_u‖₂`.
pub fn pervasiveness_diag(b_hat: &Matrix, sigma_u_hat: &Matrix) -> Result<Pervasiveness> {
    let gram = b_hat.transpose() * b_hat;
    let min_spike = if gram.is_empty() {
        0.0
    } else {
        eig_sym(&gram)?.values.min().max(0.0)
    };
    let noise_norm = sym_spectral_norm(sigma_u_hat);
    let ratio = if min_spike == 0.0 {
        0.0
    } else {
        min_spike / noise_norm
    };
    Ok(Pervasiveness {
        min_spike,
        noise_norm,
        ratio,
    })
}
