//! Spherical Gaussian mixtures by the method of moments.
//!
//! For `x ~ Σ_k w_k N(μ_k, σ_k² I)` the second and first moment statistics
//! are `M₂ = Σ w_k μ_k μ_kᵀ` and `M₁ = Σ w_k σ_k² μ_k`. Whitening `M₂` turns
//! the third moment into an orthogonally decomposable `K × K × K` tensor
//! whose eigenpairs give the weights and means.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{FarmError, Result};
use crate::linalg::{check_finite, check_symmetric, eig_sym, svd, Matrix, Vector};
use crate::robust::{sample_cov, sample_mean};

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_POWER_ITERS: usize = 100;
const POWER_TOL: f64 = 1e-12;
const POLISH_FACTOR: usize = 10;

/// Dense `K × K × K` tensor, index `(i, j, k)` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn from_vec(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim * dim {
            return Err(FarmError::dim(format!(
                "{} values for a tensor of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FarmError::NonFinite("tensor"));
        }
        Ok(Self { dim, data })
    }

    /// `Σ_r c_r a_r ⊗ a_r ⊗ a_r`.
    pub fn symmetric_sum(weights: &[f64], vectors: &[Vector]) -> Result<Self> {
        let dim = vectors.first().map_or(0, |v| v.len());
        if weights.len() != vectors.len() || vectors.iter().any(|v| v.len() != dim) {
            return Err(FarmError::dim("inconsistent rank-one terms"));
        }
        let mut t = Self::zeros(dim);
        for (c, a) in weights.iter().zip(vectors) {
            t.add_rank_one(*c, a);
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dim + j) * self.dim + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest deviation between `T_{ijk}` and its index permutations.
    pub fn asymmetry(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let v = self.get(i, j, k);
                    for w in [
                        self.get(i, k, j),
                        self.get(j, i, k),
                        self.get(j, k, i),
                        self.get(k, i, j),
                        self.get(k, j, i),
                    ] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst
    }

    /// `c · a ⊗ a ⊗ a` added in place.
    pub fn add_rank_one(&mut self, c: f64, a: &Vector) {
        let d = self.dim;
        for i in 0..d {
            let ci = c * a[i];
            for j in 0..d {
                let cij = ci * a[j];
                let base = (i * d + j) * d;
                for k in 0..d {
                    self.data[base + k] += cij * a[k];
                }
            }
        }
    }

    /// The vector `T(I, θ, θ)`.
    pub fn apply_vv(&self, theta: &Vector) -> Vector {
        let d = self.dim;
        Vector::from_fn(d, |i, _| {
            let mut s = 0.0;
            for j in 0..d {
                let base = (i * d + j) * d;
                let mut inner = 0.0;
                for k in 0..d {
                    inner += self.data[base + k] * theta[k];
                }
                s += inner * theta[j];
            }
            s
        })
    }

    /// The scalar `T(θ, θ, θ)`.
    pub fn apply_vvv(&self, theta: &Vector) -> f64 {
        self.apply_vv(theta).dot(theta)
    }
}

#[derive(Debug, Clone)]
pub struct GmmMoments {
    pub sigma_ave2: f64,
    /// Eigenvector of the sample covariance for its smallest eigenvalue.
    pub v: Vector,
    pub m1: Vector,
    pub m2: Matrix,
    pub warnings: Vec<String>,
}

/// Moment statistics `σ̂²_ave`, `M̂₁` and `M̂₂` from a `p × n` sample.
pub fn gmm_moments(x: &Matrix, k: usize) -> Result<GmmMoments> {
    check_finite(x, "data")?;
    let (p, n) = x.shape();
    if n == 0 {
        return Err(FarmError::InsufficientSamples { needed: 1, got: 0 });
    }
    if k == 0 || k > p {
        return Err(FarmError::param(format!("K = {k} must lie in [1, {p}]")));
    }
    let mut warnings = Vec::new();
    if n <= p {
        warnings.push(format!("n = {n} does not exceed p = {p}"));
    }
    let cov = sample_cov(x, true)?.matrix;
    let eig = eig_sym(&cov)?;
    let sigma_ave2 = eig.values[p - 1].max(0.0);
    let v = eig.vectors.column(p - 1).into_owned();

    let tol = 1e-8 * eig.values[0].abs().max(1.0);
    let multiplicity = eig.values.iter().filter(|&&l| l - eig.values[p - 1] <= tol).count();
    if multiplicity > p + 1 - k {
        warnings.push(format!(
            "smallest covariance eigenvalue has multiplicity {multiplicity} > p - K + 1 = {}; means may not be identifiable",
            p + 1 - k
        ));
    }

    let mean = sample_mean(x)?;
    let proj = (x.transpose() * &v).add_scalar(-mean.dot(&v));
    let m1 = x * proj.map(|s| s * s) / n as f64;
    let mut m2 = x * x.transpose() / n as f64;
    for i in 0..p {
        m2[(i, i)] -= sigma_ave2;
    }
    Ok(GmmMoments {
        sigma_ave2,
        v,
        m1,
        m2,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct Whitening {
    /// `p × K`, satisfies `Wᵀ M₂ W = I_K`.
    pub w: Matrix,
    /// `K × p` Moore-Penrose inverse `D^{1/2} Uᵀ`.
    pub w_pinv: Matrix,
}

pub fn whiten(m2: &Matrix, k: usize) -> Result<Whitening> {
    let p = m2.nrows();
    if k == 0 || k > p {
        return Err(FarmError::param(format!("K = {k} must lie in [1, {p}]")));
    }
    check_symmetric(m2)?;
    let eig = eig_sym(m2)?;
    let eps = 1e-10 * eig.values[0].abs().max(f64::MIN_POSITIVE);
    if eig.values[k - 1] <= eps {
        return Err(FarmError::RankDeficient(format!(
            "eigenvalue {k} of M2 is {:e}",
            eig.values[k - 1]
        )));
    }
    let u = eig.vectors.columns(0, k);
    let mut w = u.into_owned();
    let mut w_pinv = u.transpose();
    for j in 0..k {
        let s = eig.values[j].sqrt();
        w.column_mut(j).scale_mut(1.0 / s);
        w_pinv.row_mut(j).scale_mut(s);
    }
    Ok(Whitening { w, w_pinv })
}

/// Subtracts `Σ_j cyc((WᵀM₁) ⊗ Wᵀe_j ⊗ Wᵀe_j)` from an estimate of
/// `E(Wᵀx)^{⊗3}`.
pub fn whitened_m3_from_third(mut third: Tensor3, w: &Matrix, m1: &Vector) -> Result<Tensor3> {
    let k = w.ncols();
    if third.dim != k || w.nrows() != m1.len() {
        return Err(FarmError::dim("tensor, whitening and M1 shapes disagree"));
    }
    let a = w.transpose() * m1;
    let g = w.transpose() * w;
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                let idx = third.idx(i, j, l);
                third.data[idx] -= a[i] * g[(j, l)] + a[j] * g[(i, l)] + a[l] * g[(i, j)];
            }
        }
    }
    Ok(third)
}

/// Empirical whitened third-moment tensor `M̃₃`.
pub fn whitened_m3(x: &Matrix, w: &Matrix, m1: &Vector) -> Result<Tensor3> {
    check_finite(x, "data")?;
    if x.nrows() != w.nrows() {
        return Err(FarmError::dim(format!(
            "data has {} rows, whitening has {}",
            x.nrows(),
            w.nrows()
        )));
    }
    let n = x.ncols();
    if n == 0 {
        return Err(FarmError::InsufficientSamples { needed: 1, got: 0 });
    }
    let y = w.transpose() * x;
    let mut third = Tensor3::zeros(w.ncols());
    let c = 1.0 / n as f64;
    for col in y.column_iter() {
        third.add_rank_one(c, &col.into_owned());
    }
    whitened_m3_from_third(third, w, m1)
}

#[derive(Debug, Clone, Copy)]
pub struct PowerConfig {
    pub restarts: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            iters: DEFAULT_POWER_ITERS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TensorEigenpair {
    pub value: f64,
    pub vector: Vector,
}

/// Runs `θ ← T(I,θ,θ)/‖T(I,θ,θ)‖`; returns the iterate and whether the
/// step (up to sign) fell below tolerance.
fn power_run(t: &Tensor3, mut theta: Vector, iters: usize) -> Option<(Vector, bool)> {
    for _ in 0..iters {
        let next = t.apply_vv(&theta);
        let norm = next.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        let next = next / norm;
        let step = (&next - &theta).norm().min((&next + &theta).norm());
        theta = next;
        if step <= POWER_TOL {
            return Some((theta, true));
        }
    }
    Some((theta, false))
}

/// Eigenpairs of a symmetric tensor by power iteration with random
/// restarts and deflation. Eigenvalues are returned positive, the sign
/// being absorbed into the vector.
pub fn tensor_power(t: &Tensor3, cfg: &PowerConfig) -> Result<Vec<TensorEigenpair>> {
    let k = t.dim;
    if cfg.restarts == 0 || cfg.iters == 0 {
        return Err(FarmError::param("restarts and iterations must be positive"));
    }
    let asym = t.asymmetry();
    if asym > 1e-8 * t.norm().max(1.0) {
        return Err(FarmError::pre(format!("tensor asymmetry {asym:e}")));
    }
    if t.norm() == 0.0 {
        return Err(FarmError::pre("tensor is zero"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = t.clone();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(f64, Vector)> = None;
        for _ in 0..cfg.restarts {
            let start = Vector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
            let start = start.normalize();
            if let Some((theta, _)) = power_run(&work, start, cfg.iters) {
                let lam = work.apply_vvv(&theta);
                if best.as_ref().is_none_or(|(b, _)| lam.abs() > b.abs()) {
                    best = Some((lam, theta));
                }
            }
        }
        let Some((_, theta)) = best else {
            return Err(FarmError::Convergence {
                what: "tensor power iteration",
                iterations: cfg.iters,
                residual: f64::NAN,
            });
        };
        let (theta, converged) = power_run(&work, theta, POLISH_FACTOR * cfg.iters).ok_or(
            FarmError::Convergence {
                what: "tensor power iteration",
                iterations: POLISH_FACTOR * cfg.iters,
                residual: f64::NAN,
            },
        )?;
        let mut lam = work.apply_vvv(&theta);
        if !converged {
            let residual = (work.apply_vv(&theta) - &theta * lam).norm();
            return Err(FarmError::Convergence {
                what: "tensor power iteration",
                iterations: POLISH_FACTOR * cfg.iters,
                residual,
            });
        }
        let mut theta = theta;
        if lam < 0.0 {
            lam = -lam;
            theta = -theta;
        }
        work.add_rank_one(-lam, &theta);
        out.push(TensorEigenpair {
            value: lam,
            vector: theta,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct GmmEstimate {
    pub weights: Vec<f64>,
    /// One mean per component.
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    /// `Σ_k w_k σ_k²` implied by the recovered parameters.
    pub sigma_ave2: f64,
    pub warnings: Vec<String>,
}

/// Weights, means and variances from whitened tensor eigenpairs.
pub fn gmm_recover(pairs: &[TensorEigenpair], w_pinv: &Matrix, m1: &Vector) -> Result<GmmEstimate> {
    let k = pairs.len();
    if k == 0 {
        return Err(FarmError::param("no eigenpairs"));
    }
    if w_pinv.nrows() != k || w_pinv.ncols() != m1.len() {
        return Err(FarmError::dim("whitening inverse does not match eigenpairs and M1"));
    }
    let p = m1.len();
    let mut warnings = Vec::new();
    let mut weights = Vec::with_capacity(k);
    let mut means = Matrix::zeros(p, k);
    for (j, pair) in pairs.iter().enumerate() {
        if !(pair.value > 0.0) {
            return Err(FarmError::pre(format!("eigenvalue {j} is {:e}", pair.value)));
        }
        weights.push(pair.value.powi(-2));
        means.set_column(j, &(w_pinv.transpose() * &pair.vector * pair.value));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 0.1 {
        warnings.push(format!("recovered weights sum to {total:.4} before renormalization"));
    }

    // M₁ = Σ w_k σ_k² μ_k, solved in the least-squares sense.
    let mut design = means.clone();
    for (j, w) in weights.iter().enumerate() {
        design.column_mut(j).scale_mut(*w);
    }
    let dec = svd(&design)?;
    let s = &dec.singular_values;
    let cutoff = 1e-12 * s[0].max(f64::MIN_POSITIVE);
    let rank = s.iter().filter(|&&v| v > cutoff).count();
    if rank < k {
        warnings.push(format!(
            "recovered means span rank {rank} < K = {k}; variances from minimum-norm least squares"
        ));
    }
    let coef = dec.left.transpose() * m1;
    let mut scaled = Vector::zeros(s.len());
    for i in 0..rank {
        scaled[i] = coef[i] / s[i];
    }
    let sol = &dec.right * scaled;
    let variances: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let sigma_ave2 = weights.iter().zip(&variances).map(|(w, v)| w * v).sum();
    let means = (0..k).map(|j| means.column(j).iter().copied().collect()).collect();
    Ok(GmmEstimate {
        weights,
        means,
        variances,
        sigma_ave2,
        warnings,
    })
}

/// Full moment pipeline on a `p × n` sample.
pub fn fit_gmm(x: &Matrix, k: usize, cfg: &PowerConfig) -> Result<GmmEstimate> {
    let moments = gmm_moments(x, k)?;
    let wh = whiten(&moments.m2, k)?;
    let m3 = whitened_m3(x, &wh.w, &moments.m1)?;
    let pairs = tensor_power(&m3, cfg)?;
    let mut est = gmm_recover(&pairs, &wh.w_pinv, &moments.m1)?;
    let mut warnings = moments.warnings;
    warnings.append(&mut est.warnings);
    est.warnings = warnings;
    Ok(est)
}
