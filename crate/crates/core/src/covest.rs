//! Structured covariance estimation: observed-factor estimator, POET and
//! the thresholding rules they share.

use serde::{Deserialize, Serialize};

use crate::error::{FarmError, Result};
use crate::linalg::{check_finite, check_symmetric, eig_sym, Matrix};
use crate::robust::{center_rows, force_symmetric, sample_cov, CovEstimate, CovMethod};

pub const SCAD_A: f64 = 3.7;
pub const DEFAULT_OMEGA_C: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    Hard,
    Soft,
    Scad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelMode {
    Absolute,
    CorrelationAdaptive,
}

/// Off-diagonal thresholding rule. The diagonal is never touched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub kind: ThresholdKind,
    pub mode: LevelMode,
    pub omega: f64,
    /// Clip eigenvalues of the result at `1e-8·trace/p`.
    pub psd_repair: bool,
}

impl ThresholdRule {
    pub fn new(kind: ThresholdKind, mode: LevelMode, omega: f64) -> Self {
        Self {
            kind,
            mode,
            omega,
            psd_repair: false,
        }
    }

    /// Applies `s_ω` to a single value.
    pub fn apply(&self, z: f64) -> f64 {
        let w = self.omega;
        let a = z.abs();
        match self.kind {
            ThresholdKind::Hard => {
                if a > w {
                    z
                } else {
                    0.0
                }
            }
            ThresholdKind::Soft => (a - w).max(0.0).copysign(z),
            ThresholdKind::Scad => {
                if a <= 2.0 * w {
                    (a - w).max(0.0).copysign(z)
                } else if a <= SCAD_A * w {
                    ((SCAD_A - 1.0) * z - (SCAD_A * w).copysign(z)) / (SCAD_A - 2.0)
                } else {
                    z
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0) || !self.omega.is_finite() {
            return Err(FarmError::param(format!(
                "threshold level must be a nonnegative number, got {}",
                self.omega
            )));
        }
        Ok(())
    }
}

/// Covariance split into a low-rank part and a thresholded residual part.
#[derive(Debug, Clone)]
pub struct StructuredCov {
    pub total: CovEstimate,
    pub lowrank: Matrix,
    pub sparse_resid: Matrix,
    pub k: usize,
}

/// Thresholds the off-diagonal entries of `s`. In correlation-adaptive mode
/// the rule acts on `s_jk / √(s_jj s_kk)` and the result is scaled back.
pub fn threshold_cov(s: &Matrix, rule: &ThresholdRule) -> Result<Matrix> {
    check_symmetric(s)?;
    rule.validate()?;
    let p = s.nrows();
    let diag: Vec<f64> = (0..p).map(|j| s[(j, j)]).collect();
    if rule.mode == LevelMode::CorrelationAdaptive && diag.iter().any(|&d| d <= 0.0) {
        return Err(FarmError::pre(
            "correlation thresholding needs a strictly positive diagonal",
        ));
    }
    let mut out = s.clone();
    for j in 0..p {
        for k in (j + 1)..p {
            let v = match rule.mode {
                LevelMode::Absolute => rule.apply(s[(j, k)]),
                LevelMode::CorrelationAdaptive => {
                    let scale = (diag[j] * diag[k]).sqrt();
                    rule.apply(s[(j, k)] / scale) * scale
                }
            };
            out[(j, k)] = v;
            out[(k, j)] = v;
        }
    }
    if rule.psd_repair {
        out = clip_eigenvalues(&out)?;
    }
    Ok(out)
}

fn clip_eigenvalues(s: &Matrix) -> Result<Matrix> {
    let p = s.nrows();
    if p == 0 {
        return Ok(s.clone());
    }
    let floor = 1e-8 * s.trace() / p as f64;
    let eig = eig_sym(s)?;
    let mut scaled = eig.vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= eig.values[j].max(floor);
    }
    let mut out = scaled * eig.vectors.transpose();
    force_symmetric(&mut out);
    Ok(out)
}

/// Covariance under a model with observed factors `f` (`n × K`): per-row
/// OLS on `(1, f)`, a thresholded residual covariance, and
/// `B̂ cov̂(f) B̂ᵀ + Σ̂_u`.
pub fn observed_factor_cov(x: &Matrix, f: &Matrix, rule: &ThresholdRule) -> Result<StructuredCov> {
    let n = x.ncols();
    let k = f.ncols();
    if f.nrows() != n {
        return Err(FarmError::dim(format!(
            "factors have {} rows for {n} observations",
            f.nrows()
        )));
    }
    if n <= k + 1 {
        return Err(FarmError::InsufficientSamples { needed: k + 2, got: n });
    }
    check_finite(x, "data")?;
    check_finite(f, "factors")?;
    rule.validate()?;
    let design = Matrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { f[(i, j - 1)] });
    let coef = least_squares(&design, &x.transpose())?;
    let b_hat = coef.rows(1, k).transpose();
    let resid = x - (design * &coef).transpose();
    let s_u = sample_cov(&resid, false)?.matrix;
    let sparse_resid = threshold_cov(&s_u, rule)?;
    let cov_f = sample_cov(&f.transpose(), true)?.matrix;
    let mut lowrank = &b_hat * cov_f * b_hat.transpose();
    force_symmetric(&mut lowrank);
    let total = &lowrank + &sparse_resid;
    Ok(StructuredCov {
        total: CovEstimate::new(total, CovMethod::ObservedFactor)
            .with_param("k", k as f64)
            .with_param("omega", rule.omega),
        lowrank,
        sparse_resid,
        k,
    })
}

/// Least-squares coefficients for `design · C ≈ rhs`, via QR. Errors when
/// the design is numerically rank deficient.
pub(crate) fn least_squares(design: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let cols = design.ncols();
    let qr = design.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if cols > 0 && (0..cols).any(|j| r[(j, j)].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(FarmError::RankDeficient("design matrix is singular".into()));
    }
    let qty = qr.q().transpose() * rhs;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| FarmError::RankDeficient("design matrix is singular".into()))
}

/// `c·K·√(ln p / n)`.
pub fn default_omega_observed(n: usize, p: usize, k: usize, c: f64) -> f64 {
    c * k as f64 * ((p as f64).ln() / n as f64).sqrt()
}

/// POET: keep the top-`k` principal components of the sample covariance
/// and threshold the remainder. `demean` centers the data first.
pub fn poet(x: &Matrix, k: usize, rule: &ThresholdRule, demean: bool) -> Result<StructuredCov> {
    let (p, n) = x.shape();
    if k >= n.min(p) {
        return Err(FarmError::param(format!(
            "K = {k} must be below min(n, p) = {}",
            n.min(p)
        )));
    }
    rule.validate()?;
    let s = sample_cov(x, demean)?.matrix;
    let eig = eig_sym(&s)?;
    let mut lowrank = Matrix::zeros(p, p);
    for j in 0..k {
        let v = eig.vectors.column(j);
        lowrank += eig.values[j] * &v * v.transpose();
    }
    force_symmetric(&mut lowrank);
    let s_u = &s - &lowrank;
    let sparse_resid = threshold_cov(&s_u, rule)?;
    let total = &lowrank + &sparse_resid;
    Ok(StructuredCov {
        total: CovEstimate::new(total, CovMethod::Poet)
            .with_param("k", k as f64)
            .with_param("omega", rule.omega),
        lowrank,
        sparse_resid,
        k,
    })
}

/// Sample covariance about the mean, used as the POET baseline.
pub fn centered_cov(x: &Matrix) -> Result<Matrix> {
    let c = center_rows(x);
    Ok(&c * c.transpose() / x.ncols() as f64)
}

/// `c·(√(ln p / n) + 1/√p)`.
pub fn default_omega_poet(n: usize, p: usize, c: f64) -> f64 {
    c * (((p as f64).ln() / n as f64).sqrt() + 1.0 / (p as f64).sqrt())
}

/// `p^{−1/2} ‖Σ^{−1/2} A Σ^{−1/2}‖_F`.
pub fn entropy_loss_norm(a: &Matrix, sigma: &Matrix) -> Result<f64> {
    if a.shape() != sigma.shape() {
        return Err(FarmError::dim("A and Σ differ in size"));
    }
    check_finite(a, "A")?;
    let eig = eig_sym(sigma)?;
    let p = sigma.nrows();
    if p == 0 {
        return Ok(0.0);
    }
    if eig.values.min() <= 0.0 {
        return Err(FarmError::pre("Σ is not positive definite"));
    }
    let mut inv_root = eig.vectors.clone();
    for (j, mut col) in inv_root.column_iter_mut().enumerate() {
        col /= eig.values[j].sqrt();
    }
    let inv_root = &inv_root * eig.vectors.transpose();
    Ok((&inv_root * a * &inv_root).norm() / (p as f64).sqrt())
}
