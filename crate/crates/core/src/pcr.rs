//! Principal component regression and its Gaussian-sketched variant.
//!
//! The design `X` is `p × n` and the response `y` has length `n`, so the
//! regression is `y ≈ Xᵀβ`. With `X = P Σ Qᵀ`, the rank-`K` estimator is
//! `β̂_K = P_K Σ_K⁻¹ Q_Kᵀ y` and its fitted values are `Q_K Q_Kᵀ y`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{FarmError, Result};
use crate::linalg::{check_finite, sin_theta, spectral_norm, svd, Matrix, SubspaceBasis, SubspaceNorm, Vector};

#[derive(Debug, Clone)]
pub struct PcrFit {
    pub beta_hat: Vector,
    pub k: usize,
    /// Top-`K` singular values of `X` (or of `RᵀX` when sketched).
    pub singulars: Vector,
    pub sketched: bool,
    /// Sketch width, 0 when unsketched.
    pub m: usize,
    /// `n × K` orthonormal basis whose projector produces the fitted values.
    pub fitted_basis: Matrix,
}

impl PcrFit {
    /// `Xᵀβ̂` for the training design.
    pub fn fitted(&self, x: &Matrix) -> Vector {
        x.transpose() * &self.beta_hat
    }
}

fn check_xy(x: &Matrix, y: &Vector) -> Result<()> {
    if x.ncols() != y.len() {
        return Err(FarmError::dim(format!(
            "design has {} observations, response has {}",
            x.ncols(),
            y.len()
        )));
    }
    check_finite(x, "design")?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FarmError::NonFinite("response"));
    }
    Ok(())
}

/// Numerical rank cutoff relative to the largest singular value.
fn rank_tol(s: &Vector) -> f64 {
    1e-12 * s.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

/// `P_K Σ_K⁻¹ Q_Kᵀ y` from the SVD of `l` (`rows × n`).
fn truncated_pinv_apply(l: &Matrix, y: &Vector, k: usize) -> Result<(Vector, Vector, Matrix)> {
    if k == 0 || k > l.nrows().min(l.ncols()) {
        return Err(FarmError::param(format!(
            "K = {k} must lie in [1, {}]",
            l.nrows().min(l.ncols())
        )));
    }
    let dec = svd(l)?;
    let s = &dec.singular_values;
    if s[k - 1] <= rank_tol(s) {
        return Err(FarmError::RankDeficient(format!(
            "singular value {k} is {:e}",
            s[k - 1]
        )));
    }
    let p_k = dec.left.columns(0, k);
    let q_k = dec.right.columns(0, k).into_owned();
    let mut coef = q_k.transpose() * y;
    for j in 0..k {
        coef[j] /= s[j];
    }
    Ok((p_k * coef, s.rows(0, k).into_owned(), q_k))
}

pub fn pcr_fit(x: &Matrix, y: &Vector, k: usize) -> Result<PcrFit> {
    check_xy(x, y)?;
    let (beta_hat, singulars, fitted_basis) = truncated_pinv_apply(x, y, k)?;
    Ok(PcrFit {
        beta_hat,
        k,
        singulars,
        sketched: false,
        m: 0,
        fitted_basis,
    })
}

/// `Kσ²/n + α_{K+}ᵀ Σ_{K+}² α_{K+} / n` with `α = Pᵀβ*`: the expected
/// in-sample excess risk of [`pcr_fit`] under `N(0, σ²)` noise.
pub fn excess_risk_formula(x: &Matrix, beta_star: &Vector, sigma: f64, k: usize) -> Result<f64> {
    let (p, n) = x.shape();
    if beta_star.len() != p {
        return Err(FarmError::dim("β* length differs from the number of rows of X"));
    }
    check_finite(x, "design")?;
    let r = p.min(n);
    if k > r {
        return Err(FarmError::param(format!("K = {k} exceeds min(n, p) = {r}")));
    }
    let dec = svd(x)?;
    let alpha = dec.left.transpose() * beta_star;
    let bias: f64 = (k..r)
        .map(|j| (dec.singular_values[j] * alpha[j]).powi(2))
        .sum();
    Ok((k as f64 * sigma * sigma + bias) / n as f64)
}

/// Exact expected excess risk of any estimator whose fitted values are the
/// projection of `y` onto `span(basis)`: `Kσ²/n + ‖(I − QQᵀ)Xᵀβ*‖²/n`.
pub fn projection_excess_risk(basis: &Matrix, x: &Matrix, beta_star: &Vector, sigma: f64) -> Result<f64> {
    let n = x.ncols();
    if basis.nrows() != n || beta_star.len() != x.nrows() {
        return Err(FarmError::dim("basis, design and β* disagree in size"));
    }
    let signal = x.transpose() * beta_star;
    let resid = &signal - basis * (basis.transpose() * &signal);
    Ok((basis.ncols() as f64 * sigma * sigma + resid.norm_squared()) / n as f64)
}

/// `p × m` matrix with i.i.d. `N(0, 1/m)` entries.
pub fn gaussian_sketch(p: usize, m: usize, seed: u64) -> Result<Matrix> {
    if m == 0 {
        return Err(FarmError::param("sketch width must be at least 1"));
    }
    let dist = Normal::new(0.0, (1.0 / m as f64).sqrt()).expect("positive variance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Matrix::from_fn(p, m, |_, _| dist.sample(&mut rng)))
}

/// `β̃_K = R P̃_K Σ̃_K⁻¹ Q̃_Kᵀ y` from the SVD `RᵀX = P̃ Σ̃ Q̃ᵀ`.
pub fn sketched_pcr_fit(x: &Matrix, y: &Vector, k: usize, r: &Matrix) -> Result<PcrFit> {
    check_xy(x, y)?;
    if r.nrows() != x.nrows() {
        return Err(FarmError::dim(format!(
            "sketch has {} rows, design has {}",
            r.nrows(),
            x.nrows()
        )));
    }
    check_finite(r, "sketch")?;
    let m = r.ncols();
    if m < k {
        return Err(FarmError::param(format!("sketch width {m} is below K = {k}")));
    }
    let reduced = r.transpose() * x;
    let (inner, singulars, fitted_basis) = truncated_pinv_apply(&reduced, y, k)?;
    Ok(PcrFit {
        beta_hat: r * inner,
        k,
        singulars,
        sketched: true,
        m,
        fitted_basis,
    })
}

/// Spectral sin-θ distance between the fitted-value subspaces of two fits
/// of equal `K` on the same design.
pub fn fitted_subspace_distance(a: &PcrFit, b: &PcrFit) -> Result<f64> {
    let sa = SubspaceBasis::new(a.fitted_basis.clone())?;
    let sb = SubspaceBasis::new(b.fitted_basis.clone())?;
    sin_theta(&sa, &sb, SubspaceNorm::Spectral)
}

/// `‖X‖_F² / ‖X‖₂²`.
pub fn stable_rank(x: &Matrix) -> Result<f64> {
    check_finite(x, "matrix")?;
    let top = spectral_norm(x);
    if top == 0.0 {
        return Err(FarmError::pre("stable rank of the zero matrix"));
    }
    Ok(x.norm_squared() / (top * top))
}
