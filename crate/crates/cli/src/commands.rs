use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use farm_core::covest::{
    default_omega_poet, poet, LevelMode, ThresholdKind, ThresholdRule, DEFAULT_OMEGA_C,
};
use farm_core::datagen::{generate, FactorTruth, Generated, Scenario};
use farm_core::factor::{
    fit_pca_factors, k_diff, k_info, k_ratio, pervasiveness_diag, DEFAULT_K_MAX,
};
use farm_core::farmselect::{augmented_design, fit_augmented, lambda_by_validation, Loss, Penalty};
use farm_core::farmtest::{farmtest, FarmTestConfig};
use farm_core::gmm::{fit_gmm, PowerConfig, DEFAULT_POWER_ITERS, DEFAULT_RESTARTS};
use farm_core::linalg::eig_sym;
use farm_core::pcr::{gaussian_sketch, pcr_fit, sketched_pcr_fit, stable_rank};
use farm_core::robust::{
    default_shrinkage_tau, default_ustat_tau, elementwise_robust_cov, sample_cov, sample_mean, shrinkage_cov,
    ustat_cov, DEFAULT_ELEMENTWISE_TAU_SCALE,
};
use farm_core::spectral::{phase_sync, sbm_spectral, spectral_complete, CompletionInstance, PhaseInstance};
use farm_core::{Matrix, Vector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::io::{self, Format};
use crate::{CliError, Command, GlobalArgs, Report, VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CovChoice {
    Sample,
    Elementwise,
    Ustat,
    Shrinkage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KChoice {
    Ratio,
    Diff,
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CovestMethod {
    Sample,
    Elementwise,
    Ustat,
    Shrinkage,
    Poet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdChoice {
    Hard,
    Soft,
    Scad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LossChoice {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyChoice {
    Lasso,
    Scad,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FactorsArgs {
    /// Data file, observations in rows.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = CovChoice::Sample)]
    pub cov: CovChoice,
    /// Also write `index,eigenvalue` scree data here.
    #[arg(long)]
    pub scree_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NfactorsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = KChoice::Ratio)]
    pub method: KChoice,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    pub kmax: usize,
    /// Gap threshold for `diff`; defaults to p/4.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = CovChoice::Sample)]
    pub cov: CovChoice,
    #[arg(long)]
    pub scree_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CovestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = CovestMethod::Sample)]
    pub method: CovestMethod,
    /// Number of factors for `poet`.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ThresholdChoice::Soft)]
    pub threshold: ThresholdChoice,
    /// Threshold level on the correlation scale; defaults to
    /// `0.5·(√(ln p / n) + 1/√p)`.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Write the estimate as a matrix file instead of embedding it.
    #[arg(long)]
    pub matrix_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = CovChoice::Sample)]
    pub cov: CovChoice,
    /// Also write the `z,fdp` curve here.
    #[arg(long)]
    pub fdp_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Response file, one value per observation.
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Penalty level; chosen on a 20% hold-out split when absent.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum, default_value_t = LossChoice::Linear)]
    pub loss: LossChoice,
    #[arg(long, value_enum, default_value_t = PenaltyChoice::Scad)]
    pub penalty: PenaltyChoice,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PcrArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Gaussian sketch width; unsketched when absent.
    #[arg(long)]
    pub sketch: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GmmArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_POWER_ITERS)]
    pub iters: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SbmArgs {
    /// Symmetric 0/1 adjacency matrix.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompleteArgs {
    /// Partially observed matrix; without `--mask`, NaN or empty fields
    /// mark missing entries.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub k: usize,
    /// Known sampling rate, replacing the observed fraction.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub matrix_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SyncArgs {
    /// Real part of the Hermitian matrix.
    #[arg(long)]
    pub re: PathBuf,
    /// Imaginary part of the Hermitian matrix.
    #[arg(long)]
    pub im: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: String,
    /// Parameter override, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Fbin)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = CovChoice::Sample)]
    pub cov: CovChoice,
}

pub fn dispatch(cmd: &Command, g: &GlobalArgs) -> Result<Report, CliError> {
    let (name, params, results) = match cmd {
        Command::Factors(a) => ("factors", to_value(a)?, factors(a, g)?),
        Command::Nfactors(a) => ("nfactors", to_value(a)?, nfactors(a, g)?),
        Command::Covest(a) => ("covest", to_value(a)?, covest(a, g)?),
        Command::Test(a) => ("test", to_value(a)?, test(a, g)?),
        Command::Select(a) => ("select", to_value(a)?, select(a, g)?),
        Command::Pcr(a) => ("pcr", to_value(a)?, pcr(a, g)?),
        Command::Gmm(a) => ("gmm", to_value(a)?, gmm(a, g)?),
        Command::Sbm(a) => ("sbm", to_value(a)?, sbm(a, g)?),
        Command::Complete(a) => ("complete", to_value(a)?, complete(a, g)?),
        Command::Sync(a) => ("sync", to_value(a)?, sync(a, g)?),
        Command::Simulate(a) => ("simulate", to_value(a)?, simulate(a, g)?),
        Command::Diag(a) => ("diag", to_value(a)?, diag(a, g)?),
    };
    Ok(Report {
        command: name,
        params,
        results,
        seed: g.seed,
        version: VERSION,
    })
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    Ok(serde_json::to_value(v)?)
}

/// Rows of a matrix as nested arrays.
pub fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Reads observations-in-rows data and returns it as `p × n`.
pub fn read_data(path: &Path, g: &GlobalArgs) -> Result<Matrix, CliError> {
    let m = io::read_matrix(path, g.header)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Format(format!("{} contains non-finite values", path.display())));
    }
    Ok(m.transpose())
}

/// The covariance estimate selected by `--cov`, on `p × n` data.
pub fn covariance(x: &Matrix, choice: CovChoice) -> Result<Matrix, CliError> {
    Ok(match choice {
        CovChoice::Sample => sample_cov(x, true)?.matrix,
        CovChoice::Elementwise => elementwise_robust_cov(x, DEFAULT_ELEMENTWISE_TAU_SCALE)?.matrix,
        CovChoice::Ustat => ustat_cov(x, default_ustat_tau(x)?)?.matrix,
        CovChoice::Shrinkage => {
            let mu = sample_mean(x)?;
            let mut centered = x.clone();
            for mut col in centered.column_iter_mut() {
                col -= &mu;
            }
            let tau = default_shrinkage_tau(&centered, 1.0)?;
            shrinkage_cov(&centered, tau)?.matrix
        }
    })
}

fn write_scree(path: &Path, values: &[f64]) -> Result<(), CliError> {
    let mut s = String::from("index,eigenvalue\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, io::format_number(*v)));
    }
    io::write_atomic(path, s.as_bytes())
}

fn eigenvalues(s: &Matrix) -> Result<Vec<f64>, CliError> {
    Ok(eig_sym(s)?.values.iter().copied().collect())
}

fn factors(a: &FactorsArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let x = read_data(&a.input, g)?;
    let s = covariance(&x, a.cov)?;
    let fit = fit_pca_factors(&s, &sample_mean(&x)?, &x, a.k)?;
    let eig = eigenvalues(&s)?;
    if let Some(path) = &a.scree_csv {
        write_scree(path, &eig)?;
    }
    Ok(json!({
        "k": a.k,
        "eigenvalues": eig,
        "mu_hat": fit.mu_hat.as_slice(),
        "loadings": rows(&fit.b_hat),
        "factors": rows(&fit.f_hat),
    }))
}

fn nfactors(a: &NfactorsArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let x = read_data(&a.input, g)?;
    let (p, n) = x.shape();
    let eig = eigenvalues(&covariance(&x, a.cov)?)?;
    let sel = match a.method {
        KChoice::Ratio => k_ratio(&eig, a.kmax)?,
        KChoice::Diff => k_diff(&eig, a.delta.unwrap_or(p as f64 / 4.0), a.kmax)?,
        KChoice::Info => k_info(&eig, n, p, a.kmax, None)?,
    };
    if let Some(path) = &a.scree_csv {
        write_scree(path, &eig)?;
    }
    Ok(to_value(&sel)?)
}

fn covest(a: &CovestArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let x = read_data(&a.input, g)?;
    let (p, n) = x.shape();
    let (matrix, extra) = match a.method {
        CovestMethod::Sample => (covariance(&x, CovChoice::Sample)?, Value::Null),
        CovestMethod::Elementwise => (covariance(&x, CovChoice::Elementwise)?, Value::Null),
        CovestMethod::Ustat => (covariance(&x, CovChoice::Ustat)?, Value::Null),
        CovestMethod::Shrinkage => (covariance(&x, CovChoice::Shrinkage)?, Value::Null),
        CovestMethod::Poet => {
            let kind = match a.threshold {
                ThresholdChoice::Hard => ThresholdKind::Hard,
                ThresholdChoice::Soft => ThresholdKind::Soft,
                ThresholdChoice::Scad => ThresholdKind::Scad,
            };
            let omega = a.omega.unwrap_or_else(|| default_omega_poet(n, p, DEFAULT_OMEGA_C));
            let rule = ThresholdRule::new(kind, LevelMode::CorrelationAdaptive, omega);
            let fit = poet(&x, a.k, &rule, true)?;
            (fit.total.matrix, json!({ "k": fit.k, "omega": omega }))
        }
    };
    let embedded = match &a.matrix_out {
        Some(path) => {
            io::write_matrix(path, &matrix)?;
            Value::Null
        }
        None => to_value(&rows(&matrix))?,
    };
    Ok(json!({ "dim": p, "method": a.method, "details": extra, "matrix": embedded }))
}

fn test(a: &TestArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let x = read_data(&a.input, g)?;
    let s = covariance(&x, a.cov)?;
    let report = farmtest(&x, &s, a.k, a.alpha, &FarmTestConfig::default())?;
    if let Some(path) = &a.fdp_csv {
        let mut out = String::from("z,fdp\n");
        for (z, f) in &report.fdp_curve {
            out.push_str(&format!("{},{}\n", io::format_number(*z), io::format_number(*f)));
        }
        io::write_atomic(path, out.as_bytes())?;
    }
    Ok(to_value(&report)?)
}

fn read_response(path: &Path, n: usize, g: &GlobalArgs) -> Result<Vector, CliError> {
    let y = io::read_vector(path, g.header)?;
    if y.len() != n {
        return Err(CliError::Format(format!("response has {} values, data has {n} observations", y.len())));
    }
    Ok(Vector::from_vec(y))
}

fn select(a: &SelectArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let x = read_data(&a.input, g)?;
    let y = read_response(&a.y, x.ncols(), g)?;
    let loss = match a.loss {
        LossChoice::Linear => Loss::Linear,
        LossChoice::Logistic => Loss::Logistic,
    };
    let penalty = match a.penalty {
        PenaltyChoice::Lasso => Penalty::Lasso,
        PenaltyChoice::Scad => Penalty::Scad,
    };
    let d = augmented_design(&x, a.k)?;
    let (lambda, choice) = match a.lambda {
        Some(l) => (l, Value::Null),
        None => {
            let c = lambda_by_validation(&d, &y, loss, penalty, 30, 0.01, 0.2)?;
            (c.lambda, to_value(&c)?)
        }
    };
    let fit = fit_augmented(&d, &y, lambda, loss, penalty)?;
    Ok(json!({ "fit": fit, "lambda_selection": choice }))
}

fn pcr(a: &PcrArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let x = read_data(&a.input, g)?;
    let y = read_response(&a.y, x.ncols(), g)?;
    let fit = match a.sketch {
        None => pcr_fit(&x, &y, a.k)?,
        Some(m) => sketched_pcr_fit(&x, &y, a.k, &gaussian_sketch(x.nrows(), m, g.seed)?)?,
    };
    Ok(json!({
        "k": fit.k,
        "sketched": fit.sketched,
        "m": fit.m,
        "beta_hat": fit.beta_hat.as_slice(),
        "singulars": fit.singulars.as_slice(),
        "stable_rank": stable_rank(&x)?,
    }))
}

fn gmm(a: &GmmArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let x = read_data(&a.input, g)?;
    let cfg = PowerConfig {
        restarts: a.restarts,
        iters: a.iters,
        seed: g.seed,
    };
    Ok(to_value(&fit_gmm(&x, a.k, &cfg)?)?)
}

fn sbm(a: &SbmArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let adj = io::read_matrix(&a.input, g.header)?;
    let labels = sbm_spectral(&adj, a.k, g.seed)?;
    Ok(json!({ "labels": labels }))
}

fn complete(a: &CompleteArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let values = io::read_matrix(&a.input, g.header)?;
    let mask = match &a.mask {
        Some(path) => io::read_matrix(path, g.header)?,
        None => values.map(|v| if v.is_finite() { 1.0 } else { 0.0 }),
    };
    let values = values.map(|v| if v.is_finite() { v } else { 0.0 });
    let inst = CompletionInstance::new(mask, values, a.k)?;
    let fit = spectral_complete(&inst, a.p)?;
    let embedded = match &a.matrix_out {
        Some(path) => {
            io::write_matrix(path, &fit.m_hat)?;
            Value::Null
        }
        None => to_value(&rows(&fit.m_hat))?,
    };
    Ok(json!({
        "p_hat": fit.p_hat,
        "singulars": fit.singulars.as_slice(),
        "m_hat": embedded,
        "warnings": fit.warnings,
    }))
}

fn sync(a: &SyncArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let re = io::read_matrix(&a.re, g.header)?;
    let im = io::read_matrix(&a.im, g.header)?;
    let fit = phase_sync(&PhaseInstance::from_parts(&re, &im, f64::NAN)?)?;
    let parts = |v: &farm_core::spectral::CVector| -> (Vec<f64>, Vec<f64>) {
        (v.iter().map(|z| z.re).collect(), v.iter().map(|z| z.im).collect())
    };
    let (v_re, v_im) = parts(&fit.v);
    let (n_re, n_im) = parts(&fit.normalized);
    Ok(json!({
        "eigenvalue": fit.eigenvalue,
        "iterations": fit.iterations,
        "v_re": v_re,
        "v_im": v_im,
        "normalized_re": n_re,
        "normalized_im": n_im,
    }))
}

/// Default scenario parameters with `key=value` overrides applied.
pub fn scenario_from_args(name: &str, overrides: &[String]) -> Result<Scenario, CliError> {
    let base = Scenario::default_for(name).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut value = serde_json::to_value(&base)?;
    let obj = value.as_object_mut().expect("scenario serializes to an object");
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("parameter '{item}' is not KEY=VALUE")))?;
        if key == "name" || !obj.contains_key(key) {
            return Err(CliError::Usage(format!("scenario {name} has no parameter '{key}'")));
        }
        let parsed: Value = serde_json::from_str(raw)
            .map_err(|_| CliError::Usage(format!("parameter '{key}' needs a number, got '{raw}'")))?;
        obj.insert(key.to_string(), parsed);
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid parameters for {name}: {e}")))
}

fn factor_truth_json(t: &FactorTruth) -> Value {
    json!({ "mu": t.mu.as_slice(), "loadings": rows(&t.b), "factors": rows(&t.f) })
}

fn simulate(a: &SimulateArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let dir = g
        .out
        .as_ref()
        .ok_or_else(|| CliError::Usage("simulate needs --out DIR".into()))?;
    let scenario = scenario_from_args(&a.scenario, &a.params)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let data = generate(&scenario, g.seed)?;
    let ext = a.format.extension();
    let mut files = Vec::new();
    let mut put = |stem: &str, m: &Matrix| -> Result<(), CliError> {
        let path = dir.join(format!("{stem}.{ext}"));
        io::write_atomic(&path, &io::encode_matrix(m, a.format))?;
        files.push(path.display().to_string());
        Ok(())
    };
    let truth = match &data {
        Generated::Factor { x, truth } => {
            put("X", &x.transpose())?;
            factor_truth_json(truth)
        }
        Generated::Regression { x, y, beta, truth } => {
            put("X", &x.transpose())?;
            put("y", &Matrix::from_column_slice(y.len(), 1, y.as_slice()))?;
            let mut t = factor_truth_json(truth);
            t["beta"] = to_value(&beta.as_slice())?;
            t
        }
        Generated::Sbm(inst) => {
            put("A", &inst.adjacency)?;
            json!({ "labels": inst.truth })
        }
        Generated::Completion { instance, m_star } => {
            let observed = instance
                .mask
                .zip_map(&instance.values, |m, v| if m == 1.0 { v } else { f64::NAN });
            put("M", &observed)?;
            put("mask", &instance.mask)?;
            put("M_star", m_star)?;
            json!({ "rank": instance.k })
        }
        Generated::Phase { instance, z } => {
            put("C_re", &instance.c.map(|c| c.re))?;
            put("C_im", &instance.c.map(|c| c.im))?;
            json!({
                "sigma": instance.sigma,
                "z_re": z.iter().map(|c| c.re).collect::<Vec<_>>(),
                "z_im": z.iter().map(|c| c.im).collect::<Vec<_>>(),
            })
        }
        Generated::Mixture {
            x,
            labels,
            weights,
            means,
            variances,
        } => {
            put("X", &x.transpose())?;
            json!({
                "labels": labels,
                "weights": weights,
                "means": rows(&means.transpose()),
                "variances": variances,
            })
        }
    };
    let truth_doc = json!({ "scenario": scenario, "seed": g.seed, "truth": truth });
    let truth_path = dir.join("truth.json");
    let mut text = serde_json::to_string_pretty(&truth_doc)?;
    text.push('\n');
    io::write_atomic(&truth_path, text.as_bytes())?;
    files.push(truth_path.display().to_string());
    Ok(json!({ "scenario": scenario, "files": files }))
}

fn diag(a: &DiagArgs, g: &GlobalArgs) -> Result<Value, CliError> {
    let x = read_data(&a.input, g)?;
    let s = covariance(&x, a.cov)?;
    let fit = fit_pca_factors(&s, &sample_mean(&x)?, &x, a.k)?;
    let sigma_u = &s - &fit.b_hat * fit.b_hat.transpose();
    let eig = eigenvalues(&s)?;
    let gap = if a.k < eig.len() { eig[a.k - 1] - eig[a.k] } else { f64::NAN };
    Ok(json!({
        "pervasiveness": pervasiveness_diag(&fit.b_hat, &sigma_u)?,
        "eigenvalues": eig,
        "eigengap": gap,
        "stable_rank": stable_rank(&x)?,
    }))
}
