//! Seeded synthetic data for every simulation setting.
//!
//! All generators draw from a single `ChaCha8Rng` seeded with the 64-bit
//! seed, in a fixed order, so a `(scenario, seed)` pair always produces the
//! same output. Data matrices are `p × n`.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, StudentT, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{FarmError, Result};
use crate::linalg::{Matrix, Vector};
use crate::spectral::{CMatrix, CVector, CompletionInstance, PhaseInstance, SbmInstance};

/// Simulation settings with their default parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Scenario {
    /// `X = BFᵀ + U`, loadings `N(0, 1/4)`, factors `N(0, 1)`, noise `N(0, 5²)`.
    Fig1Factor { n: usize, p: usize, k: usize },
    /// Loadings uniform on `[−2, 2]`, `N(0, I)` factors, `t₃` noise,
    /// `μ_j = signal` for the first `n_signal` coordinates.
    Fig5Farmtest {
        n: usize,
        p: usize,
        k: usize,
        n_signal: usize,
        signal: f64,
    },
    /// Factor design with `N(0, 1)` loadings and noise, `s` coefficients
    /// uniform on `[2, 5]`, regression noise of variance `noise_var`.
    Fig6Farmselect {
        n: usize,
        p: usize,
        k: usize,
        s: usize,
        noise_var: f64,
    },
    /// Two equal blocks with edge probabilities `a log n / n` within and
    /// `b log n / n` between.
    Sbm { n: usize, a: f64, b: f64 },
    /// Rank-`rank` Gaussian-factor matrix observed with probability `p_obs`
    /// plus `N(0, σ²)` noise.
    Completion {
        n1: usize,
        n2: usize,
        rank: usize,
        p_obs: f64,
        sigma: f64,
    },
    /// `C = zz* + σW` with uniform phases and Hermitian Gaussian `W`.
    PhaseSync { n: usize, sigma: f64 },
    /// Spherical mixture with equal weights, `N(0, mean_scale² I)` means and
    /// variances uniform on `[0.5, 1.5]`.
    Gmm {
        n: usize,
        p: usize,
        k: usize,
        mean_scale: f64,
    },
    /// `x = Bf + u` with `N(0, 1)` loadings, factors and noise.
    SpikedCov { n: usize, p: usize, k: usize },
}

pub const SCENARIO_NAMES: [&str; 8] = [
    "fig1_factor",
    "fig5_farmtest",
    "fig6_farmselect",
    "sbm",
    "completion",
    "phase_sync",
    "gmm",
    "spiked_cov",
];

impl Scenario {
    pub fn default_for(name: &str) -> Result<Self> {
        Ok(match name {
            "fig1_factor" => Self::Fig1Factor { n: 1000, p: 400, k: 2 },
            "fig5_farmtest" => Self::Fig5Farmtest {
                n: 100,
                p: 500,
                k: 3,
                n_signal: 125,
                signal: 0.6,
            },
            "fig6_farmselect" => Self::Fig6Farmselect {
                n: 160,
                p: 500,
                k: 3,
                s: 10,
                noise_var: 0.3,
            },
            "sbm" => Self::Sbm { n: 2000, a: 5.0, b: 0.25 },
            "completion" => Self::Completion {
                n1: 200,
                n2: 200,
                rank: 1,
                p_obs: 0.5,
                sigma: 0.01,
            },
            "phase_sync" => Self::PhaseSync { n: 500, sigma: 1.0 },
            "gmm" => Self::Gmm {
                n: 10_000,
                p: 5,
                k: 3,
                mean_scale: 3.0,
            },
            "spiked_cov" => Self::SpikedCov { n: 200, p: 100, k: 1 },
            other => {
                return Err(FarmError::param(format!(
                    "unknown scenario '{other}' (expected one of {})",
                    SCENARIO_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fig1Factor { .. } => "fig1_factor",
            Self::Fig5Farmtest { .. } => "fig5_farmtest",
            Self::Fig6Farmselect { .. } => "fig6_farmselect",
            Self::Sbm { .. } => "sbm",
            Self::Completion { .. } => "completion",
            Self::PhaseSync { .. } => "phase_sync",
            Self::Gmm { .. } => "gmm",
            Self::SpikedCov { .. } => "spiked_cov",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |what: &str, v: usize| {
            if v == 0 {
                Err(FarmError::param(format!("{what} must be positive")))
            } else {
                Ok(())
            }
        };
        match *self {
            Self::Fig1Factor { n, p, k } | Self::SpikedCov { n, p, k } => {
                positive("n", n)?;
                positive("p", p)?;
                positive("k", k)
            }
            Self::Fig5Farmtest {
                n,
                p,
                k,
                n_signal,
                signal,
            } => {
                positive("n", n)?;
                positive("p", p)?;
                positive("k", k)?;
                if n_signal > p || !signal.is_finite() {
                    return Err(FarmError::param("need n_signal <= p and a finite signal"));
                }
                Ok(())
            }
            Self::Fig6Farmselect { n, p, k: _, s, noise_var } => {
                positive("n", n)?;
                positive("p", p)?;
                if s > p {
                    return Err(FarmError::param(format!("s = {s} exceeds p = {p}")));
                }
                if !(noise_var >= 0.0) || !noise_var.is_finite() {
                    return Err(FarmError::param("noise variance must be finite and nonnegative"));
                }
                Ok(())
            }
            Self::Sbm { n, a, b } => {
                if n < 2 {
                    return Err(FarmError::param("SBM needs at least two nodes"));
                }
                let scale = (n as f64).ln() / n as f64;
                if !(a >= 0.0 && b >= 0.0 && a * scale <= 1.0 && b * scale <= 1.0) {
                    return Err(FarmError::param(format!(
                        "a = {a}, b = {b} do not give probabilities in [0, 1]"
                    )));
                }
                Ok(())
            }
            Self::Completion {
                n1,
                n2,
                rank,
                p_obs,
                sigma,
            } => {
                positive("n1", n1)?;
                positive("n2", n2)?;
                positive("rank", rank)?;
                if rank > n1.min(n2) || !(p_obs > 0.0 && p_obs <= 1.0) || !(sigma >= 0.0) {
                    return Err(FarmError::param("need rank <= min(n1, n2), p_obs in (0, 1], sigma >= 0"));
                }
                Ok(())
            }
            Self::PhaseSync { n, sigma } => {
                positive("n", n)?;
                if !(sigma >= 0.0) || !sigma.is_finite() {
                    return Err(FarmError::param("sigma must be finite and nonnegative"));
                }
                Ok(())
            }
            Self::Gmm { n, p, k, mean_scale } => {
                positive("n", n)?;
                positive("k", k)?;
                if k > p || !(mean_scale > 0.0) {
                    return Err(FarmError::param("need k <= p and a positive mean scale"));
                }
                Ok(())
            }
        }
    }
}

/// Components of `X = μ1ᵀ + BFᵀ + U`.
#[derive(Debug, Clone)]
pub struct FactorTruth {
    pub mu: Vector,
    /// `p × K` loadings.
    pub b: Matrix,
    /// `n × K` factors.
    pub f: Matrix,
    /// `p × n` idiosyncratic part.
    pub u: Matrix,
}

impl FactorTruth {
    pub fn assemble(&self) -> Matrix {
        let mut x = &self.b * self.f.transpose() + &self.u;
        for mut col in x.column_iter_mut() {
            col += &self.mu;
        }
        x
    }
}

#[derive(Debug, Clone)]
pub enum Generated {
    Factor {
        x: Matrix,
        truth: FactorTruth,
    },
    Regression {
        x: Matrix,
        y: Vector,
        beta: Vector,
        truth: FactorTruth,
    },
    Sbm(SbmInstance),
    Completion {
        instance: CompletionInstance,
        m_star: Matrix,
    },
    Phase {
        instance: PhaseInstance,
        z: CVector,
    },
    Mixture {
        x: Matrix,
        labels: Vec<usize>,
        weights: Vec<f64>,
        /// `p × K`, one mean per column.
        means: Matrix,
        variances: Vec<f64>,
    },
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
}

/// i.i.d. Student-t entries with three degrees of freedom (variance 3).
pub fn student_t3(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    t3_matrix(&mut rng, rows, cols)
}

fn t3_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let t = StudentT::new(3.0).expect("valid degrees of freedom");
    Matrix::from_fn(rows, cols, |_, _| t.sample(rng))
}

pub fn generate(s: &Scenario, seed: u64) -> Result<Generated> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    Ok(match *s {
        Scenario::Fig1Factor { n, p, k } => {
            let b = gaussian_matrix(rng, p, k, 0.5);
            let f = gaussian_matrix(rng, n, k, 1.0);
            let u = gaussian_matrix(rng, p, n, 5.0);
            factor_data(Vector::zeros(p), b, f, u)
        }
        Scenario::Fig5Farmtest {
            n,
            p,
            k,
            n_signal,
            signal,
        } => {
            let load = Uniform::new_inclusive(-2.0, 2.0).expect("valid range");
            let b = Matrix::from_fn(p, k, |_, _| load.sample(rng));
            let f = gaussian_matrix(rng, n, k, 1.0);
            let u = t3_matrix(rng, p, n);
            let mu = Vector::from_fn(p, |j, _| if j < n_signal { signal } else { 0.0 });
            factor_data(mu, b, f, u)
        }
        Scenario::Fig6Farmselect { n, p, k, s, noise_var } => {
            let b = gaussian_matrix(rng, p, k, 1.0);
            let f = gaussian_matrix(rng, n, k, 1.0);
            let u = gaussian_matrix(rng, p, n, 1.0);
            let coef = Uniform::new_inclusive(2.0, 5.0).expect("valid range");
            let beta = Vector::from_fn(p, |j, _| if j < s { coef.sample(rng) } else { 0.0 });
            let truth = FactorTruth {
                mu: Vector::zeros(p),
                b,
                f,
                u,
            };
            let x = truth.assemble();
            let noise = Normal::new(0.0, noise_var.sqrt()).expect("valid sd");
            let y = x.transpose() * &beta + Vector::from_fn(n, |_, _| noise.sample(rng));
            Generated::Regression { x, y, beta, truth }
        }
        Scenario::Sbm { n, a, b } => {
            let scale = (n as f64).ln() / n as f64;
            let (p_in, p_out) = (a * scale, b * scale);
            let truth: Vec<usize> = (0..n).map(|i| usize::from(i >= n.div_ceil(2))).collect();
            let mut adj = Matrix::zeros(n, n);
            for j in 0..n {
                for i in 0..=j {
                    let prob = if truth[i] == truth[j] { p_in } else { p_out };
                    if rng.random::<f64>() < prob {
                        adj[(i, j)] = 1.0;
                        adj[(j, i)] = 1.0;
                    }
                }
            }
            Generated::Sbm(SbmInstance::new(adj, 2, Some(truth))?)
        }
        Scenario::Completion {
            n1,
            n2,
            rank,
            p_obs,
            sigma,
        } => {
            let u = gaussian_matrix(rng, n1, rank, 1.0);
            let v = gaussian_matrix(rng, n2, rank, 1.0);
            let m_star = &u * v.transpose();
            let mask = Matrix::from_fn(n1, n2, |_, _| f64::from(u8::from(rng.random::<f64>() < p_obs)));
            let noise = gaussian_matrix(rng, n1, n2, sigma);
            let values = mask.zip_map(&(&m_star + noise), |m, v| m * v);
            Generated::Completion {
                instance: CompletionInstance::new(mask, values, rank)?,
                m_star,
            }
        }
        Scenario::PhaseSync { n, sigma } => {
            let z = CVector::from_fn(n, |_, _| {
                Complex::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
            });
            let mut c = &z * z.adjoint();
            let half = std::f64::consts::FRAC_1_SQRT_2;
            for j in 0..n {
                let d: f64 = StandardNormal.sample(rng);
                c[(j, j)] += Complex::new(sigma * d, 0.0);
                for i in 0..j {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    let w = Complex::new(re * half, im * half) * sigma;
                    c[(i, j)] += w;
                    c[(j, i)] += w.conj();
                }
            }
            Generated::Phase {
                instance: PhaseInstance::new(c, sigma)?,
                z,
            }
        }
        Scenario::Gmm { n, p, k, mean_scale } => {
            let means = gaussian_matrix(rng, p, k, mean_scale);
            let var = Uniform::new_inclusive(0.5, 1.5).expect("valid range");
            let variances: Vec<f64> = (0..k).map(|_| var.sample(rng)).collect();
            let weights = vec![1.0 / k as f64; k];
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let mut x = Matrix::zeros(p, n);
            for (i, &l) in labels.iter().enumerate() {
                let sd = variances[l].sqrt();
                for r in 0..p {
                    let z: f64 = StandardNormal.sample(rng);
                    x[(r, i)] = means[(r, l)] + sd * z;
                }
            }
            Generated::Mixture {
                x,
                labels,
                weights,
                means,
                variances,
            }
        }
        Scenario::SpikedCov { n, p, k } => {
            let b = gaussian_matrix(rng, p, k, 1.0);
            let f = gaussian_matrix(rng, n, k, 1.0);
            let u = gaussian_matrix(rng, p, n, 1.0);
            factor_data(Vector::zeros(p), b, f, u)
        }
    })
}

fn factor_data(mu: Vector, b: Matrix, f: Matrix, u: Matrix) -> Generated {
    let truth = FactorTruth { mu, b, f, u };
    Generated::Factor {
        x: truth.assemble(),
        truth,
    }
}

/// Rank-one `C = zz*` without noise, used by exact checks.
pub fn noiseless_phase(z: &CVector) -> CMatrix {
    z * z.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        for name in SCENARIO_NAMES {
            let mut s = Scenario::default_for(name).unwrap();
            // Keep the check fast.
            match &mut s {
                Scenario::Sbm { n, .. } => *n = 100,
                Scenario::Gmm { n, .. } => *n = 200,
                Scenario::Fig1Factor { n, .. } => *n = 50,
                _ => {}
            }
            let a = format!("{:?}", generate(&s, 11).unwrap());
            let b = format!("{:?}", generate(&s, 11).unwrap());
            assert_eq!(a, b, "{name}");
        }
    }

    #[test]
    fn factor_identity_holds() {
        let s = Scenario::Fig1Factor { n: 30, p: 12, k: 2 };
        let Generated::Factor { x, truth } = generate(&s, 4).unwrap() else {
            panic!("wrong variant");
        };
        assert_eq!(x.shape(), (12, 30));
        assert_eq!(x, &truth.b * truth.f.transpose() + &truth.u);
    }

    #[test]
    fn fig5_means() {
        let s = Scenario::default_for("fig5_farmtest").unwrap();
        let Generated::Factor { x, truth } = generate(&s, 0).unwrap() else {
            panic!("wrong variant");
        };
        assert_eq!(x.shape(), (500, 100));
        assert_eq!(truth.mu.iter().filter(|&&m| m == 0.6).count(), 125);
        assert!(truth.b.amax() <= 2.0);
    }

    #[test]
    fn noiseless_phase_is_rank_one() {
        let s = Scenario::PhaseSync { n: 20, sigma: 0.0 };
        let Generated::Phase { instance, z } = generate(&s, 2).unwrap() else {
            panic!("wrong variant");
        };
        assert_eq!(instance.c, noiseless_phase(&z));
    }

    #[test]
    fn sbm_adjacency_is_binary_symmetric() {
        let Generated::Sbm(inst) = generate(&Scenario::Sbm { n: 60, a: 5.0, b: 0.25 }, 1).unwrap() else {
            panic!("wrong variant");
        };
        assert_eq!(inst.adjacency, inst.adjacency.transpose());
        assert_eq!(inst.truth.as_ref().unwrap().iter().filter(|&&l| l == 0).count(), 30);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Scenario::default_for("nope").is_err());
        assert!(generate(&Scenario::Sbm { n: 10, a: 100.0, b: 0.1 }, 0).is_err());
        assert!(generate(&Scenario::Completion { n1: 4, n2: 4, rank: 5, p_obs: 0.5, sigma: 0.0 }, 0).is_err());
    }

    #[test]
    fn t3_reproducible() {
        assert_eq!(student_t3(9, 4, 5), student_t3(9, 4, 5));
        assert_ne!(student_t3(9, 4, 5), student_t3(10, 4, 5));
    }
}
