//! Factor-adjusted robust multiple testing of `H₀ⱼ: μⱼ = 0`.

use serde::Serialize;

use crate::error::{FarmError, Result};
use crate::linalg::{check_finite, eig_sym, Matrix, Vector};
use crate::normal;
use crate::robust::{default_tau, huber_mean, HuberConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FarmTestConfig {
    /// Multiplier on the Huber levels `τⱼ` for means and second moments.
    /// `∞` disables robustification.
    pub tau_scale: f64,
    /// Multiplier on the Huber level `γ` of the factor regression.
    pub gamma_scale: f64,
    /// Storey's `λ`.
    pub pi0_lambda: f64,
    pub grid_size: usize,
}

impl Default for FarmTestConfig {
    fn default() -> Self {
        Self {
            tau_scale: 1.0,
            gamma_scale: 1.0,
            pi0_lambda: 0.5,
            grid_size: 2048,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub f_bar_hat: Vec<f64>,
    pub sigma_u_hat: Vec<f64>,
    pub pi0_hat: f64,
    pub z_alpha: f64,
    pub alpha: f64,
    pub rejected: Vec<usize>,
    /// `(z, FDP^A(z))` on the search grid.
    pub fdp_curve: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

fn row_sd(row: &[f64]) -> f64 {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Huber level `scale·√(n/ln(np))` for a sequence with spread `sd`. A
/// constant sequence gets `∞`, where the Huber estimate is the mean anyway.
fn huber_level(n: usize, p: usize, sd: f64, scale: f64) -> Result<f64> {
    if scale.is_infinite() || sd == 0.0 {
        return Ok(f64::INFINITY);
    }
    default_tau(n, p.max(2), scale * sd)
}

/// `argmin_f Σⱼ ℓ_γ(yⱼ − aⱼᵀf)` by iteratively reweighted least squares,
/// started from ordinary least squares. `γ` is `gamma_scale·√(p/ln(pn))`
/// times the spread of the least-squares residuals.
fn huber_regression(a: &Matrix, y: &Vector, n: usize, gamma_scale: f64) -> Result<Vector> {
    let (p, k) = a.shape();
    let solve = |w: &Vector| -> Result<Vector> {
        let mut aw = a.clone();
        for (j, mut row) in aw.row_iter_mut().enumerate() {
            row *= w[j];
        }
        let gram = a.transpose() * &aw;
        let rhs = aw.transpose() * y;
        gram.cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| FarmError::RankDeficient("loadings are rank deficient".into()))
    };
    let mut f = solve(&Vector::from_element(p, 1.0))?;
    let resid = y - a * &f;
    let spread = (resid.norm_squared() / (p.saturating_sub(k).max(1)) as f64).sqrt();
    let gamma = huber_level(p, n, spread, gamma_scale)?;
    if gamma.is_infinite() {
        return Ok(f);
    }
    let max_iters = 1000;
    for _ in 0..max_iters {
        let resid = y - a * &f;
        let w = resid.map(|r| if r.abs() <= gamma { 1.0 } else { gamma / r.abs() });
        let next = solve(&w)?;
        let step = (&next - &f).amax();
        f = next;
        if step <= 1e-10 * (1.0 + f.amax()) {
            return Ok(f);
        }
    }
    Err(FarmError::Convergence {
        what: "huber regression",
        iterations: max_iters,
        residual: (y - a * &f).norm(),
    })
}

/// Storey's `π̂₀(λ) = #{P̂ⱼ > λ} / ((1 − λ)p)`, clipped to `[0, 1]`.
pub fn storey_pi0(p_values: &[f64], lambda: f64) -> Result<f64> {
    if p_values.is_empty() {
        return Err(FarmError::InsufficientSamples { needed: 1, got: 0 });
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(FarmError::param("storey lambda must lie in (0, 1)"));
    }
    let above = p_values.iter().filter(|&&v| v > lambda).count() as f64;
    Ok((above / ((1.0 - lambda) * p_values.len() as f64)).clamp(0.0, 1.0))
}

/// `2π̂₀pΦ(−z)/R(z)` with `R(z) = #{|Tⱼ| ≥ z}`; `0` when nothing is rejected.
pub fn fdp_a(z: f64, t_stats: &[f64], pi0: f64) -> f64 {
    let r = t_stats.iter().filter(|t| t.abs() >= z).count();
    if r == 0 {
        return 0.0;
    }
    2.0 * pi0 * t_stats.len() as f64 * normal::sf(z) / r as f64
}

/// Two-sided normal p-values `2Φ(−|T|)`.
pub fn p_values(t_stats: &[f64]) -> Vec<f64> {
    t_stats.iter().map(|t| 2.0 * normal::sf(t.abs())).collect()
}

/// Upper end of the critical-value grid is the two-sided Bonferroni cutoff
/// at this level, independent of `α` so that `z_α` is monotone in `α`.
const GRID_LEVEL: f64 = 0.05;

/// Smallest grid point `z` on `[0, Φ⁻¹(1 − 0.05/(2p))]` with
/// `FDP^A(z) ≤ α` (`∞` if none), together with the sampled curve.
pub fn critical_value(t_stats: &[f64], pi0: f64, alpha: f64, grid_size: usize) -> (f64, Vec<(f64, f64)>) {
    let p = t_stats.len().max(1) as f64;
    let top = normal::quantile(1.0 - GRID_LEVEL / (2.0 * p));
    let steps = grid_size.max(2) - 1;
    let curve: Vec<(f64, f64)> = (0..=steps)
        .map(|i| {
            let z = top * i as f64 / steps as f64;
            (z, fdp_a(z, t_stats, pi0))
        })
        .collect();
    let z_alpha = curve
        .iter()
        .find(|(_, v)| *v <= alpha)
        .map_or(f64::INFINITY, |(z, _)| *z);
    (z_alpha, curve)
}

/// FarmTest on `p × n` data with a robust covariance input `sigma_hat`.
/// `k = 0` gives unadjusted robust tests.
pub fn farmtest(x: &Matrix, sigma_hat: &Matrix, k: usize, alpha: f64, cfg: &FarmTestConfig) -> Result<TestReport> {
    let (p, n) = x.shape();
    if n < 10 {
        return Err(FarmError::InsufficientSamples { needed: 10, got: n });
    }
    if sigma_hat.shape() != (p, p) {
        return Err(FarmError::dim(format!(
            "covariance is {}x{} for {p} variables",
            sigma_hat.nrows(),
            sigma_hat.ncols()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FarmError::param("alpha must lie in (0, 1)"));
    }
    if k >= p {
        return Err(FarmError::param(format!("K = {k} must be below p = {p}")));
    }
    if !(cfg.tau_scale > 0.0) || !(cfg.gamma_scale > 0.0) {
        return Err(FarmError::param("robustification scales must be positive"));
    }
    check_finite(x, "data")?;

    let b_hat = if k == 0 {
        Matrix::zeros(p, 0)
    } else {
        let eig = eig_sym(sigma_hat)?;
        let mut b = eig.vectors.columns(0, k).into_owned();
        for j in 0..k {
            b.column_mut(j).scale_mut(eig.values[j].max(0.0).sqrt());
        }
        b
    };

    let rows: Vec<Vec<f64>> = (0..p).map(|j| x.row(j).iter().copied().collect()).collect();
    let mut mu_hat = Vec::with_capacity(p);
    for row in &rows {
        let tau = huber_level(n, p, row_sd(row), cfg.tau_scale)?;
        mu_hat.push(huber_mean(row, &HuberConfig::new(tau))?);
    }

    let f_bar_hat = if k == 0 {
        Vector::zeros(0)
    } else {
        let x_bar = Vector::from_iterator(p, rows.iter().map(|r| r.iter().sum::<f64>() / n as f64));
        huber_regression(&b_hat, &x_bar, n, cfg.gamma_scale)?
    };

    let mut sigma_u_hat = Vec::with_capacity(p);
    let mut floored = 0;
    for (j, row) in rows.iter().enumerate() {
        let squares: Vec<f64> = row.iter().map(|v| v * v).collect();
        let tau = huber_level(n, p, row_sd(&squares), cfg.tau_scale)?;
        let load = b_hat.row(j).norm_squared();
        let lower = mu_hat[j] * mu_hat[j] + load;
        let theta = huber_mean(&squares, &HuberConfig::new(tau))?.max(lower);
        let floor = 1e-8 * row_sd(row).powi(2);
        let raw = theta - lower;
        if raw <= floor {
            floored += 1;
        }
        sigma_u_hat.push(raw.max(floor).max(f64::MIN_POSITIVE));
    }

    let t_stats: Vec<f64> = (0..p)
        .map(|j| {
            let adjust = if k == 0 { 0.0 } else { b_hat.row(j).dot(&f_bar_hat.transpose()) };
            (n as f64 / sigma_u_hat[j]).sqrt() * (mu_hat[j] - adjust)
        })
        .collect();
    let pv = p_values(&t_stats);
    let pi0_hat = storey_pi0(&pv, cfg.pi0_lambda)?;
    let (z_alpha, fdp_curve) = critical_value(&t_stats, pi0_hat, alpha, cfg.grid_size);
    let rejected = (0..p).filter(|&j| t_stats[j].abs() >= z_alpha).collect();

    let mut warnings = Vec::new();
    if 2 * floored > p {
        warnings.push(format!(
            "{floored} of {p} idiosyncratic variances hit the floor; the factor model may not fit"
        ));
    }
    Ok(TestReport {
        t_stats,
        p_values: pv,
        mu_hat,
        f_bar_hat: f_bar_hat.iter().copied().collect(),
        sigma_u_hat,
        pi0_hat,
        z_alpha,
        alpha,
        rejected,
        fdp_curve,
        warnings,
    })
}

/// Classical statistics `√n x̄ⱼ / sⱼ` with the unbiased standard deviation.
pub fn naive_t_stats(x: &Matrix) -> Vec<f64> {
    let n = x.ncols() as f64;
    x.row_iter()
        .map(|r| {
            let row: Vec<f64> = r.iter().copied().collect();
            n.sqrt() * (row.iter().sum::<f64>() / n) / row_sd(&row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(p: usize, n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn storey_examples() {
        assert_eq!(storey_pi0(&[0.01, 0.2, 0.6, 0.9], 0.5).unwrap(), 1.0);
        assert_eq!(storey_pi0(&[0.0; 5], 0.5).unwrap(), 0.0);
        let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!((storey_pi0(&grid, 0.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fdp_examples() {
        let t = [1.0, -2.0, 0.5];
        assert!((fdp_a(0.0, &t, 0.7) - 0.7).abs() < 1e-15);
        assert_eq!(fdp_a(1e6, &t, 0.7), 0.0);
        let v = fdp_a(2.0, &[3.0, 3.0, 0.1, 0.1], 1.0);
        let want = 2.0 * 4.0 * normal::sf(2.0) / 2.0;
        assert!((v - want).abs() < 1e-15);
        assert!((v - 0.0910).abs() < 1e-4);
    }

    #[test]
    fn fdp_is_monotone_between_rejection_changes() {
        let t = [3.0, 3.0, 0.1, 0.1];
        // R(z) is constant on (0.1, 3]; FDP^A decreases there.
        let a = fdp_a(0.2, &t, 1.0);
        let b = fdp_a(2.9, &t, 1.0);
        assert!(b < a);
        // but jumps up once the two small statistics leave the rejection set
        assert!(fdp_a(0.11, &t, 1.0) > fdp_a(0.1, &t, 1.0));
    }

    #[test]
    fn classical_z_tests_without_factors_or_truncation() {
        let x = gaussian(30, 40, 1) + Matrix::from_fn(30, 40, |j, _| if j < 5 { 1.0 } else { 0.0 });
        let cfg = FarmTestConfig {
            tau_scale: f64::INFINITY,
            ..FarmTestConfig::default()
        };
        let report = farmtest(&x, &Matrix::identity(30, 30), 0, 0.05, &cfg).unwrap();
        for j in 0..30 {
            let row: Vec<f64> = x.row(j).iter().copied().collect();
            let mean = row.iter().sum::<f64>() / 40.0;
            let var = row.iter().map(|v| v * v).sum::<f64>() / 40.0 - mean * mean;
            let z = 40f64.sqrt() * mean / var.sqrt();
            assert!((report.t_stats[j] - z).abs() < 1e-10);
        }
    }

    #[test]
    fn null_data_report_is_consistent() {
        let x = gaussian(200, 60, 2);
        let report = farmtest(&x, &Matrix::identity(200, 200), 0, 0.05, &FarmTestConfig::default()).unwrap();
        for j in 0..200 {
            assert_eq!(report.rejected.contains(&j), report.t_stats[j].abs() >= report.z_alpha);
        }
        assert!(report.z_alpha.is_finite());
        assert!((0.0..=1.0).contains(&report.pi0_hat));
    }

    #[test]
    fn factor_adjustment_removes_common_shift() {
        let (p, n) = (300, 80);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = Matrix::from_fn(p, 2, |_, _| StandardNormal.sample(&mut rng));
        let f = Matrix::from_fn(2, n, |_, _| StandardNormal.sample(&mut rng));
        let x = &b * &f + gaussian(p, n, 4);
        let sigma = crate::robust::sample_cov(&x, true).unwrap().matrix;
        let report = farmtest(&x, &sigma, 2, 0.05, &FarmTestConfig::default()).unwrap();
        let mean_sq = report.t_stats.iter().map(|t| t * t).sum::<f64>() / p as f64;
        assert!(mean_sq < 2.0, "mean square {mean_sq}");
        assert!(report.sigma_u_hat.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        let x = gaussian(5, 9, 5);
        assert!(farmtest(&x, &Matrix::identity(5, 5), 0, 0.05, &FarmTestConfig::default()).is_err());
        let x = gaussian(5, 20, 5);
        assert!(farmtest(&x, &Matrix::identity(5, 5), 0, 1.5, &FarmTestConfig::default()).is_err());
        assert!(farmtest(&x, &Matrix::identity(4, 4), 0, 0.05, &FarmTestConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn z_alpha_nonincreasing_in_alpha(
            t in prop::collection::vec(-6.0f64..6.0, 5..60),
            a1 in 0.01f64..0.5,
            da in 0.0f64..0.4,
        ) {
            let pi0 = storey_pi0(&p_values(&t), 0.5).unwrap();
            let (z1, _) = critical_value(&t, pi0, a1, 512);
            let (z2, _) = critical_value(&t, pi0, a1 + da, 512);
            prop_assert!(z2 <= z1 + 1e-12);
        }
    }
}
