//! Factor-adjusted penalized regression (FarmSelect).
//!
//! Covariates are split by a PCA factor fit into factors `f̂ᵢ` and
//! idiosyncratic parts `ûᵢ`; the response is then regressed on
//! `(1, ûᵢ, f̂ᵢ)` with only the `û` coefficients penalized. The objective is
//! `n⁻¹ Σᵢ L(yᵢ, α + ûᵢᵀβ + f̂ᵢᵀγ) + Σⱼ p_λ(|βⱼ|)`.

use serde::{Deserialize, Serialize};

use crate::error::{FarmError, Result};
use crate::factor::pca_factors;
use crate::linalg::{check_finite, Matrix, Vector};
use crate::robust::center_rows;

pub const SCAD_A: f64 = 3.7;
const LLA_STEPS: usize = 3;
const CD_TOL: f64 = 1e-8;
const CD_MAX_SWEEPS: usize = 10_000;
const NEWTON_MAX_STEPS: usize = 100;
const SUPPORT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Lasso,
    Scad,
}

/// Regression design after factor adjustment: `u` holds the penalized
/// columns (`n × p`), `f` the unpenalized factor columns (`n × K`).
#[derive(Debug, Clone)]
pub struct AugmentedDesign {
    pub u: Matrix,
    pub f: Matrix,
}

impl AugmentedDesign {
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn p(&self) -> usize {
        self.u.ncols()
    }

    pub fn k(&self) -> usize {
        self.f.ncols()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectFit {
    pub alpha_hat: f64,
    pub beta_hat: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub lambda: f64,
    pub support: Vec<usize>,
    pub loss: Loss,
    pub penalty: Penalty,
    pub objective: f64,
}

/// Factor-adjusted design from `p × n` covariates. `k = 0` yields the
/// centered covariates and no factor columns.
pub fn augmented_design(x: &Matrix, k: usize) -> Result<AugmentedDesign> {
    let (p, n) = x.shape();
    if n < 2 {
        return Err(FarmError::InsufficientSamples { needed: 2, got: n });
    }
    check_finite(x, "covariates")?;
    if k == 0 {
        return Ok(AugmentedDesign {
            u: center_rows(x).transpose(),
            f: Matrix::zeros(n, 0),
        });
    }
    if k >= p.min(n) {
        return Err(FarmError::param(format!("K = {k} must be below min(n, p)")));
    }
    let fit = pca_factors(x, k)?;
    Ok(AugmentedDesign {
        u: fit.u_hat.transpose(),
        f: fit.f_hat,
    })
}

/// SCAD penalty with parameter `a`.
pub fn scad_penalty(t: f64, lambda: f64, a: f64) -> Result<f64> {
    if !(a > 2.0) {
        return Err(FarmError::param("SCAD parameter a must exceed 2"));
    }
    let t = t.abs();
    Ok(if t <= lambda {
        lambda * t
    } else if t <= a * lambda {
        (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * lambda * lambda / 2.0
    })
}

/// SCAD derivative `p'_λ(t)` for `t ≥ 0`; the LLA weight.
fn scad_derivative(t: f64, lambda: f64) -> f64 {
    let t = t.abs();
    if t <= lambda {
        lambda
    } else {
        ((SCAD_A * lambda - t).max(0.0)) / (SCAD_A - 1.0)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `Σ λⱼ|βⱼ|`, with zero coefficients contributing nothing even when `λⱼ = ∞`.
fn l1_term(beta: &Vector, pen: &[f64]) -> f64 {
    beta.iter().zip(pen).filter(|(b, _)| **b != 0.0).map(|(b, l)| l * b.abs()).sum()
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    (z.abs() - t).max(0.0).copysign(z)
}

/// Coefficients in a single vector: `[α, β₁..β_p, γ₁..γ_K]`.
struct Coefs {
    alpha: f64,
    beta: Vector,
    gamma: Vector,
}

impl Coefs {
    fn zeros(p: usize, k: usize) -> Self {
        Self {
            alpha: 0.0,
            beta: Vector::zeros(p),
            gamma: Vector::zeros(k),
        }
    }

    fn linear_predictor(&self, d: &AugmentedDesign) -> Vector {
        let mut eta = &d.u * &self.beta + &d.f * &self.gamma;
        eta.add_scalar_mut(self.alpha);
        eta
    }
}

fn mean_loss(loss: Loss, y: &Vector, eta: &Vector) -> f64 {
    let n = y.len() as f64;
    match loss {
        Loss::Linear => y.iter().zip(eta.iter()).map(|(a, b)| 0.5 * (a - b).powi(2)).sum::<f64>() / n,
        Loss::Logistic => y
            .iter()
            .zip(eta.iter())
            .map(|(a, b)| softplus(*b) - a * b)
            .sum::<f64>()
            / n,
    }
}

/// Weighted-lasso coordinate descent on
/// `(2n)⁻¹ Σ wᵢ (zᵢ − α − uᵢᵀβ − fᵢᵀγ)² + Σⱼ λⱼ|βⱼ|`, warm-started at `c`.
fn weighted_cd(d: &AugmentedDesign, z: &Vector, w: &Vector, pen: &[f64], c: &mut Coefs) -> Result<()> {
    let n = d.n() as f64;
    let mut resid = z - c.linear_predictor(d);
    let wsum = w.sum() / n;
    let u_sq: Vec<f64> = d
        .u
        .column_iter()
        .map(|col| col.iter().zip(w.iter()).map(|(x, wi)| wi * x * x).sum::<f64>() / n)
        .collect();
    let f_sq: Vec<f64> = d
        .f
        .column_iter()
        .map(|col| col.iter().zip(w.iter()).map(|(x, wi)| wi * x * x).sum::<f64>() / n)
        .collect();
    let objective = |resid: &Vector, c: &Coefs| {
        let fit: f64 = resid.iter().zip(w.iter()).map(|(r, wi)| wi * r * r).sum::<f64>() / (2.0 * n);
        fit + l1_term(&c.beta, pen)
    };
    let mut last = objective(&resid, c);
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_change = 0.0f64;
        if wsum > 0.0 {
            let shift = resid.iter().zip(w.iter()).map(|(r, wi)| wi * r).sum::<f64>() / n / wsum;
            if shift != 0.0 {
                c.alpha += shift;
                resid.add_scalar_mut(-shift);
                max_change = max_change.max(shift.abs());
            }
        }
        for j in 0..d.k() {
            if f_sq[j] == 0.0 {
                continue;
            }
            let col = d.f.column(j);
            let grad = col.iter().zip(resid.iter()).zip(w.iter()).map(|((x, r), wi)| wi * x * r).sum::<f64>() / n;
            let step = grad / f_sq[j];
            if step != 0.0 {
                c.gamma[j] += step;
                resid.axpy(-step, &col, 1.0);
                max_change = max_change.max(step.abs());
            }
        }
        for j in 0..d.p() {
            if u_sq[j] == 0.0 {
                continue;
            }
            let col = d.u.column(j);
            let grad = col.iter().zip(resid.iter()).zip(w.iter()).map(|((x, r), wi)| wi * x * r).sum::<f64>() / n;
            let old = c.beta[j];
            let new = soft_threshold(grad + u_sq[j] * old, pen[j]) / u_sq[j];
            let delta = new - old;
            if delta != 0.0 {
                c.beta[j] = new;
                resid.axpy(-delta, &col, 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        let obj = objective(&resid, c);
        debug_assert!(obj <= last + 1e-12 * (1.0 + last.abs()), "coordinate descent increased the objective");
        last = obj;
        if max_change <= CD_TOL {
            return Ok(());
        }
    }
    Err(FarmError::Convergence {
        what: "coordinate descent",
        iterations: CD_MAX_SWEEPS,
        residual: last,
    })
}

fn penalized_objective(loss: Loss, d: &AugmentedDesign, y: &Vector, c: &Coefs, pen: &[f64]) -> f64 {
    mean_loss(loss, y, &c.linear_predictor(d)) + l1_term(&c.beta, pen)
}

/// Minimizes the weighted-ℓ₁ objective for the given loss, warm-started at `c`.
fn solve_weighted_l1(loss: Loss, d: &AugmentedDesign, y: &Vector, pen: &[f64], c: &mut Coefs) -> Result<()> {
    let n = d.n();
    match loss {
        Loss::Linear => weighted_cd(d, y, &Vector::from_element(n, 1.0), pen, c),
        Loss::Logistic => {
            let mut obj = penalized_objective(loss, d, y, c, pen);
            for _ in 0..NEWTON_MAX_STEPS {
                let eta = c.linear_predictor(d);
                let prob = eta.map(sigmoid);
                let w = prob.map(|q| (q * (1.0 - q)).max(1e-5));
                let z = Vector::from_iterator(n, (0..n).map(|i| eta[i] + (y[i] - prob[i]) / w[i]));
                let mut trial = Coefs {
                    alpha: c.alpha,
                    beta: c.beta.clone(),
                    gamma: c.gamma.clone(),
                };
                weighted_cd(d, &z, &w, pen, &mut trial)?;
                // Backtrack along the Newton direction until the true objective decreases.
                let da = trial.alpha - c.alpha;
                let db = &trial.beta - &c.beta;
                let dg = &trial.gamma - &c.gamma;
                let mut t = 1.0;
                let mut accepted = None;
                for _ in 0..30 {
                    let cand = Coefs {
                        alpha: c.alpha + t * da,
                        beta: &c.beta + &db * t,
                        gamma: &c.gamma + &dg * t,
                    };
                    let v = penalized_objective(loss, d, y, &cand, pen);
                    if v <= obj + 1e-14 * (1.0 + obj.abs()) {
                        accepted = Some((cand, v));
                        break;
                    }
                    t *= 0.5;
                }
                let Some((cand, v)) = accepted else {
                    return Ok(());
                };
                let change = (t * da.abs()).max((&db * t).amax()).max(if dg.is_empty() { 0.0 } else { (&dg * t).amax() });
                *c = cand;
                obj = v;
                if change <= CD_TOL {
                    return Ok(());
                }
            }
            Err(FarmError::Convergence {
                what: "proximal Newton",
                iterations: NEWTON_MAX_STEPS,
                residual: obj,
            })
        }
    }
}

fn check_response(d: &AugmentedDesign, y: &Vector, loss: Loss) -> Result<()> {
    if y.len() != d.n() || d.f.nrows() != d.n() {
        return Err(FarmError::dim(format!(
            "design has {} rows, response has {}",
            d.n(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FarmError::NonFinite("response"));
    }
    if loss == Loss::Logistic && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(FarmError::param("logistic responses must be 0 or 1"));
    }
    Ok(())
}

/// Penalized fit on a prepared design.
pub fn fit_augmented(d: &AugmentedDesign, y: &Vector, lambda: f64, loss: Loss, penalty: Penalty) -> Result<SelectFit> {
    check_response(d, y, loss)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(FarmError::param(format!("lambda must be a nonnegative number, got {lambda}")));
    }
    let p = d.p();
    let mut c = Coefs::zeros(p, d.k());
    let mut pen = vec![lambda; p];
    solve_weighted_l1(loss, d, y, &pen, &mut c)?;
    if penalty == Penalty::Scad {
        for _ in 0..LLA_STEPS {
            for (w, b) in pen.iter_mut().zip(c.beta.iter()) {
                *w = scad_derivative(*b, lambda);
            }
            solve_weighted_l1(loss, d, y, &pen, &mut c)?;
        }
    }
    let objective = mean_loss(loss, y, &c.linear_predictor(d))
        + match penalty {
            Penalty::Lasso => lambda * c.beta.abs().sum(),
            Penalty::Scad => c.beta.iter().map(|b| scad_penalty(*b, lambda, SCAD_A).unwrap_or(0.0)).sum(),
        };
    let support = (0..p).filter(|&j| c.beta[j].abs() > SUPPORT_TOL).collect();
    Ok(SelectFit {
        alpha_hat: c.alpha,
        beta_hat: c.beta.iter().copied().collect(),
        gamma_hat: c.gamma.iter().copied().collect(),
        lambda,
        support,
        loss,
        penalty,
        objective,
    })
}

/// FarmSelect on `p × n` covariates with `k` estimated factors.
pub fn farmselect(x: &Matrix, y: &Vector, k: usize, lambda: f64, loss: Loss, penalty: Penalty) -> Result<SelectFit> {
    let d = augmented_design(x, k)?;
    fit_augmented(&d, y, lambda, loss, penalty)
}

/// Penalty level chosen on a hold-out split.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

impl AugmentedDesign {
    fn rows(&self, idx: &[usize]) -> Self {
        Self {
            u: self.u.select_rows(idx.iter()),
            f: self.f.select_rows(idx.iter()),
        }
    }
}

/// Picks `λ` from a geometric grid of `grid_size` values between
/// `λ_max` and `λ_max · min_ratio` (both on the training part) by the mean
/// loss on the last `⌈holdout·n⌉` observations. Fits are warm-started
/// along the grid in decreasing order.
pub fn lambda_by_validation(
    d: &AugmentedDesign,
    y: &Vector,
    loss: Loss,
    penalty: Penalty,
    grid_size: usize,
    min_ratio: f64,
    holdout: f64,
) -> Result<LambdaChoice> {
    check_response(d, y, loss)?;
    let n = d.n();
    if grid_size < 2 || !(min_ratio > 0.0 && min_ratio < 1.0) || !(holdout > 0.0 && holdout < 1.0) {
        return Err(FarmError::param("need grid_size ≥ 2, min_ratio in (0, 1), holdout in (0, 1)"));
    }
    let n_val = ((holdout * n as f64).ceil() as usize).max(1);
    if n_val + 2 > n {
        return Err(FarmError::InsufficientSamples { needed: n_val + 2, got: n });
    }
    let train: Vec<usize> = (0..n - n_val).collect();
    let val: Vec<usize> = (n - n_val..n).collect();
    let (dt, dv) = (d.rows(&train), d.rows(&val));
    let yt = y.select_rows(train.iter());
    let yv = y.select_rows(val.iter());
    let top = lambda_max(&dt, &yt, loss)?;
    if top == 0.0 {
        return Err(FarmError::pre("response is fully explained by the unpenalized columns"));
    }
    let step = min_ratio.ln() / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|i| top * (step * i as f64).exp()).collect();
    let mut validation_loss = Vec::with_capacity(grid_size);
    for &lambda in &grid {
        let fit = fit_augmented(&dt, &yt, lambda, loss, penalty)?;
        let eta = coefs_of(&fit).linear_predictor(&dv);
        validation_loss.push(mean_loss(loss, &yv, &eta));
    }
    let best = validation_loss
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(LambdaChoice {
        lambda: grid[best],
        grid,
        validation_loss,
    })
}

/// Gradient of the mean loss with respect to `[α, β, γ]`.
fn loss_gradient(loss: Loss, d: &AugmentedDesign, y: &Vector, c: &Coefs) -> (f64, Vector, Vector) {
    let n = d.n() as f64;
    let eta = c.linear_predictor(d);
    let g = match loss {
        Loss::Linear => &eta - y,
        Loss::Logistic => eta.map(sigmoid) - y,
    };
    (g.sum() / n, d.u.transpose() * &g / n, d.f.transpose() * &g / n)
}

fn coefs_of(fit: &SelectFit) -> Coefs {
    Coefs {
        alpha: fit.alpha_hat,
        beta: Vector::from_vec(fit.beta_hat.clone()),
        gamma: Vector::from_vec(fit.gamma_hat.clone()),
    }
}

/// Smallest `λ` at which the Lasso solution is `β̂ = 0`.
pub fn lambda_max(d: &AugmentedDesign, y: &Vector, loss: Loss) -> Result<f64> {
    check_response(d, y, loss)?;
    let mut c = Coefs::zeros(d.p(), d.k());
    let pen = vec![f64::INFINITY; d.p()];
    solve_weighted_l1(loss, d, y, &pen, &mut c)?;
    let (_, gb, _) = loss_gradient(loss, d, y, &c);
    Ok(gb.amax())
}

/// Largest violation of the Lasso optimality conditions at `fit`.
pub fn lasso_kkt_check(fit: &SelectFit, d: &AugmentedDesign, y: &Vector) -> Result<f64> {
    check_response(d, y, fit.loss)?;
    if fit.penalty != Penalty::Lasso {
        return Err(FarmError::param("KKT check applies to Lasso fits"));
    }
    if fit.beta_hat.len() != d.p() || fit.gamma_hat.len() != d.k() {
        return Err(FarmError::dim("fit does not match the design"));
    }
    let c = coefs_of(fit);
    let (ga, gb, gg) = loss_gradient(fit.loss, d, y, &c);
    let mut worst = ga.abs().max(gg.amax());
    for (j, &b) in c.beta.iter().enumerate() {
        let v = if b == 0.0 {
            (gb[j].abs() - fit.lambda).max(0.0)
        } else {
            (gb[j] + fit.lambda * b.signum()).abs()
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng))
    }

    /// Plain Lasso with intercept by naive cyclic descent that recomputes
    /// every partial residual from scratch.
    fn naive_lasso(xc: &Matrix, y: &Vector, lambda: f64) -> (f64, Vector) {
        let (n, p) = xc.shape();
        let nf = n as f64;
        let mut beta = Vector::zeros(p);
        let mut alpha = 0.0;
        for _ in 0..100_000 {
            let mut change = 0.0f64;
            let a_new = (y - xc * &beta).mean();
            change = change.max((a_new - alpha).abs());
            alpha = a_new;
            for j in 0..p {
                let mut partial = y - xc * &beta;
                partial.add_scalar_mut(-alpha);
                let col = xc.column(j);
                let denom = col.norm_squared() / nf;
                let rho = col.dot(&partial) / nf + denom * beta[j];
                let b = soft_threshold(rho, lambda) / denom;
                change = change.max((b - beta[j]).abs());
                beta[j] = b;
            }
            if change < 1e-14 {
                break;
            }
        }
        (alpha, beta)
    }

    #[test]
    fn scad_penalty_examples() {
        assert_eq!(scad_penalty(0.0, 0.5, 3.7).unwrap(), 0.0);
        assert!((scad_penalty(0.5, 0.5, 3.7).unwrap() - 0.25).abs() < 1e-15);
        let plateau = 4.7 * 0.25 / 2.0;
        assert!((scad_penalty(3.7 * 0.5, 0.5, 3.7).unwrap() - plateau).abs() < 1e-12);
        assert!((scad_penalty(10.0, 0.5, 3.7).unwrap() - plateau).abs() < 1e-15);
        assert!(scad_penalty(1.0, 0.5, 2.0).is_err());
    }

    #[test]
    fn large_lambda_gives_unpenalized_fit() {
        let x = gaussian(20, 50, 1);
        let y = gaussian(50, 1, 2).column(0).into_owned();
        let d = augmented_design(&x, 2).unwrap();
        let lmax = lambda_max(&d, &y, Loss::Linear).unwrap();
        let fit = fit_augmented(&d, &y, lmax * 1.0001, Loss::Linear, Penalty::Lasso).unwrap();
        assert!(fit.beta_hat.iter().all(|&b| b == 0.0));
        // α̂, γ̂ equal OLS of y on (1, F̂)
        let design = Matrix::from_fn(50, 3, |i, j| if j == 0 { 1.0 } else { d.f[(i, j - 1)] });
        let ols = crate::covest::least_squares(&design, &Matrix::from_column_slice(50, 1, y.as_slice())).unwrap();
        assert!((fit.alpha_hat - ols[(0, 0)]).abs() < 1e-8);
        assert!((fit.gamma_hat[0] - ols[(1, 0)]).abs() < 1e-8);
        assert!((fit.gamma_hat[1] - ols[(2, 0)]).abs() < 1e-8);
        assert!(lasso_kkt_check(&fit, &d, &y).unwrap() <= 1e-6);
        let fit = fit_augmented(&d, &y, lmax * 0.9, Loss::Linear, Penalty::Lasso).unwrap();
        assert!(!fit.support.is_empty());
    }

    #[test]
    fn zero_factors_matches_plain_lasso() {
        let x = gaussian(15, 40, 3);
        let beta = Vector::from_fn(15, |j, _| if j < 3 { 2.0 } else { 0.0 });
        let y = x.transpose() * &beta + gaussian(40, 1, 4).column(0) * 0.5;
        let d = augmented_design(&x, 0).unwrap();
        let fit = fit_augmented(&d, &y, 0.1, Loss::Linear, Penalty::Lasso).unwrap();
        let (alpha, oracle) = naive_lasso(&d.u, &y, 0.1);
        assert!((fit.alpha_hat - alpha).abs() < 1e-8);
        for j in 0..15 {
            assert!((fit.beta_hat[j] - oracle[j]).abs() < 1e-8);
        }
        assert!(lasso_kkt_check(&fit, &d, &y).unwrap() <= 1e-6);
    }

    #[test]
    fn perturbed_fit_violates_kkt() {
        let x = gaussian(10, 60, 5);
        let y = gaussian(60, 1, 6).column(0).into_owned();
        let d = augmented_design(&x, 1).unwrap();
        let mut fit = fit_augmented(&d, &y, 0.05, Loss::Linear, Penalty::Lasso).unwrap();
        assert!(lasso_kkt_check(&fit, &d, &y).unwrap() <= 1e-6);
        fit.beta_hat[0] += 0.1;
        assert!(lasso_kkt_check(&fit, &d, &y).unwrap() > 1e-3);
    }

    #[test]
    fn logistic_lasso_satisfies_kkt() {
        let x = gaussian(12, 150, 7);
        let eta = x.row(0) * 2.0 - x.row(1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = Vector::from_iterator(
            150,
            eta.iter().map(|e| if rand::Rng::random::<f64>(&mut rng) < sigmoid(*e) { 1.0 } else { 0.0 }),
        );
        let d = augmented_design(&x, 1).unwrap();
        let fit = fit_augmented(&d, &y, 0.02, Loss::Logistic, Penalty::Lasso).unwrap();
        assert!(lasso_kkt_check(&fit, &d, &y).unwrap() <= 1e-6);
        assert!(fit.support.contains(&0));
        let bad = Vector::from_element(150, 2.0);
        assert!(fit_augmented(&d, &bad, 0.02, Loss::Logistic, Penalty::Lasso).is_err());
    }

    #[test]
    fn scad_reduces_bias_on_strong_signals() {
        let x = gaussian(30, 200, 9);
        let beta = Vector::from_fn(30, |j, _| if j < 3 { 3.0 } else { 0.0 });
        let y = x.transpose() * &beta + gaussian(200, 1, 10).column(0) * 0.3;
        let d = augmented_design(&x, 0).unwrap();
        let lasso = fit_augmented(&d, &y, 0.3, Loss::Linear, Penalty::Lasso).unwrap();
        let scad = fit_augmented(&d, &y, 0.3, Loss::Linear, Penalty::Scad).unwrap();
        for j in 0..3 {
            assert!((scad.beta_hat[j] - 3.0).abs() < (lasso.beta_hat[j] - 3.0).abs());
        }
    }

    #[test]
    fn orthogonal_design_support_monotone_in_lambda() {
        let n = 64;
        let p = 8;
        // orthonormalized centered columns stay centered
        let centered = center_rows(&gaussian(p, n, 12)).transpose();
        let u = centered.qr().q() * (n as f64).sqrt();
        let d = AugmentedDesign { u, f: Matrix::zeros(n, 0) };
        let y = gaussian(n, 1, 11).column(0).into_owned();
        let mut prev = usize::MAX;
        for l in [0.01, 0.05, 0.1, 0.2, 0.4, 0.8] {
            let fit = fit_augmented(&d, &y, l, Loss::Linear, Penalty::Lasso).unwrap();
            assert!(fit.support.len() <= prev);
            prev = fit.support.len();
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn linear_lasso_kkt_holds(seed in 0u64..10_000, lambda in 0.005f64..0.5, k in 0usize..3) {
            let x = gaussian(12, 40, seed);
            let y = gaussian(40, 1, seed + 1).column(0).into_owned();
            let d = augmented_design(&x, k).unwrap();
            let fit = fit_augmented(&d, &y, lambda, Loss::Linear, Penalty::Lasso).unwrap();
            prop_assert!(lasso_kkt_check(&fit, &d, &y).unwrap() <= 1e-6);
            for (j, b) in fit.beta_hat.iter().enumerate() {
                prop_assert_eq!(fit.support.contains(&j), b.abs() > SUPPORT_TOL);
            }
        }
    }

    #[test]
    fn validation_grid_is_decreasing() {
        let x = gaussian(20, 60, 8);
        let mut y = x.row(0).transpose() * 2.0 - x.row(3).transpose();
        y += gaussian(60, 1, 9).column(0) * 0.3;
        let d = augmented_design(&x, 1).unwrap();
        let choice = lambda_by_validation(&d, &y, Loss::Linear, Penalty::Lasso, 10, 0.01, 0.25).unwrap();
        assert_eq!(choice.grid.len(), 10);
        assert!(choice.grid.windows(2).all(|w| w[1] < w[0]));
        assert!(choice.grid.contains(&choice.lambda));
        let best = choice.validation_loss.iter().copied().fold(f64::INFINITY, f64::min);
        let at = choice.grid.iter().position(|&l| l == choice.lambda).unwrap();
        assert_eq!(choice.validation_loss[at], best);
        assert!(lambda_by_validation(&d, &y, Loss::Linear, Penalty::Lasso, 1, 0.01, 0.25).is_err());
        assert!(lambda_by_validation(&d, &y, Loss::Linear, Penalty::Lasso, 10, 0.01, 1.0).is_err());
    }
}
