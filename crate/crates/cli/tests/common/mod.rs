//! Runs every subcommand through the binary and recomputes its results by
//! calling the library directly.

use std::path::{Path, PathBuf};
use std::process::Command;

use farm_cli::commands::rows;
use farm_cli::io::{decode_fbin, encode_csv, encode_fbin, write_matrix};
use farm_core::covest::{default_omega_poet, poet, LevelMode, ThresholdKind, ThresholdRule, DEFAULT_OMEGA_C};
use farm_core::datagen::{generate, Generated, Scenario};
use farm_core::factor::{fit_pca_factors, k_ratio, pervasiveness_diag};
use farm_core::farmselect::{augmented_design, fit_augmented, lambda_by_validation, Loss, Penalty};
use farm_core::farmtest::{farmtest, FarmTestConfig};
use farm_core::gmm::{fit_gmm, PowerConfig};
use farm_core::linalg::eig_sym;
use farm_core::pcr::{gaussian_sketch, sketched_pcr_fit, stable_rank};
use farm_core::robust::{default_ustat_tau, elementwise_robust_cov, sample_cov, sample_mean, ustat_cov};
use farm_core::spectral::{phase_sync, sbm_spectral, spectral_complete, PhaseInstance};
use farm_core::Matrix;
use serde_json::{json, Value};

pub struct Smoke {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

fn farm(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_farm"))
        .args(args)
        .env_remove("FARM_SEED")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn results_of(args: &[&str]) -> Result<Value, String> {
    let (code, stdout, stderr) = farm(args);
    if code != 0 {
        return Err(format!("exit {code}: {stderr}"));
    }
    let doc: Value = serde_json::from_str(&stdout).map_err(|e| e.to_string())?;
    Ok(doc["results"].clone())
}

fn compare(name: &'static str, args: &[&str], expected: Result<Value, String>) -> Smoke {
    let got = results_of(args);
    let (ok, detail) = match (got, expected) {
        (Ok(g), Ok(e)) => {
            let (gs, es) = (serde_json::to_string(&g).unwrap(), serde_json::to_string(&e).unwrap());
            if gs == es {
                (true, format!("{} bytes identical", gs.len()))
            } else {
                let at = gs.bytes().zip(es.bytes()).position(|(a, b)| a != b).unwrap_or(gs.len().min(es.len()));
                (false, format!("results differ at byte {at}"))
            }
        }
        (Err(e), _) => (false, format!("cli failed: {e}")),
        (_, Err(e)) => (false, format!("library failed: {e}")),
    };
    Smoke { name, ok, detail }
}

fn lib<T>(r: farm_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn save(dir: &Path, name: &str, m: &Matrix) -> PathBuf {
    let path = dir.join(name);
    write_matrix(&path, m).expect("write input");
    path
}

fn factor_data(seed: u64) -> Matrix {
    match generate(&Scenario::Fig5Farmtest { n: 60, p: 40, k: 3, n_signal: 10, signal: 0.8 }, seed).unwrap() {
        Generated::Factor { x, .. } => x,
        _ => unreachable!(),
    }
}

pub fn run_smoke_suite() -> Vec<Smoke> {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path();
    let mut out = Vec::new();

    // fbin and csv round trips, bit for bit.
    let x = factor_data(3);
    let bytes = encode_fbin(&x);
    let back = decode_fbin(&bytes).unwrap();
    let fbin_ok = x.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
    let csv_back = farm_cli::io::decode_csv(&encode_csv(&x), false).unwrap();
    let csv_ok = x.iter().zip(csv_back.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
    out.push(Smoke {
        name: "fbin/csv round trip",
        ok: fbin_ok && csv_ok,
        detail: format!("fbin {fbin_ok}, csv {csv_ok}"),
    });

    // Files hold observations in rows; the library works on p × n.
    let xf = save(dir, "x.fbin", &x.transpose());
    let xs = p(&xf);

    let expected = (|| {
        let s = lib(sample_cov(&x, true))?.matrix;
        let fit = lib(fit_pca_factors(&s, &lib(sample_mean(&x))?, &x, 3))?;
        let eig: Vec<f64> = lib(eig_sym(&s))?.values.iter().copied().collect();
        Ok(json!({
            "k": 3,
            "eigenvalues": eig,
            "mu_hat": fit.mu_hat.as_slice(),
            "loadings": rows(&fit.b_hat),
            "factors": rows(&fit.f_hat),
        }))
    })();
    out.push(compare("factors", &["factors", "--in", xs, "--k", "3"], expected));

    let expected = (|| {
        let s = lib(sample_cov(&x, true))?.matrix;
        let eig: Vec<f64> = lib(eig_sym(&s))?.values.iter().copied().collect();
        Ok(serde_json::to_value(lib(k_ratio(&eig, 15))?).unwrap())
    })();
    out.push(compare("nfactors", &["nfactors", "--in", xs, "--method", "ratio", "--kmax", "15"], expected));

    let expected = (|| {
        let (pp, n) = x.shape();
        let omega = default_omega_poet(n, pp, DEFAULT_OMEGA_C);
        let rule = ThresholdRule::new(ThresholdKind::Soft, LevelMode::CorrelationAdaptive, omega);
        let fit = lib(poet(&x, 2, &rule, true))?;
        Ok(json!({
            "dim": pp,
            "method": "poet",
            "details": { "k": 2, "omega": omega },
            "matrix": rows(&fit.total.matrix),
        }))
    })();
    out.push(compare("covest poet", &["covest", "--in", xs, "--method", "poet", "--k", "2"], expected));

    let expected = (|| {
        let s = lib(elementwise_robust_cov(&x, farm_core::robust::DEFAULT_ELEMENTWISE_TAU_SCALE))?.matrix;
        Ok(json!({ "dim": x.nrows(), "method": "elementwise", "details": null, "matrix": rows(&s) }))
    })();
    out.push(compare("covest elementwise", &["covest", "--in", xs, "--method", "elementwise"], expected));

    let expected = (|| {
        let s = lib(ustat_cov(&x, lib(default_ustat_tau(&x))?))?.matrix;
        let report = lib(farmtest(&x, &s, 3, 0.05, &FarmTestConfig::default()))?;
        Ok(serde_json::to_value(report).unwrap())
    })();
    out.push(compare(
        "test",
        &["test", "--in", xs, "--k", "3", "--alpha", "0.05", "--cov", "ustat"],
        expected,
    ));

    // Regression data.
    let Generated::Regression { x: xr, y, .. } =
        generate(&Scenario::Fig6Farmselect { n: 80, p: 30, k: 2, s: 3, noise_var: 0.3 }, 5).unwrap()
    else {
        unreachable!()
    };
    let xrf = save(dir, "xr.csv", &xr.transpose());
    let yf = save(dir, "y.csv", &Matrix::from_column_slice(y.len(), 1, y.as_slice()));
    let expected = (|| {
        let d = lib(augmented_design(&xr, 2))?;
        let choice = lib(lambda_by_validation(&d, &y, Loss::Linear, Penalty::Scad, 30, 0.01, 0.2))?;
        let fit = lib(fit_augmented(&d, &y, choice.lambda, Loss::Linear, Penalty::Scad))?;
        Ok(json!({ "fit": fit, "lambda_selection": choice }))
    })();
    out.push(compare("select", &["select", "--in", p(&xrf), "--y", p(&yf), "--k", "2"], expected));

    let expected = (|| {
        let r = lib(gaussian_sketch(xr.nrows(), 12, 9))?;
        let fit = lib(sketched_pcr_fit(&xr, &y, 3, &r))?;
        Ok(json!({
            "k": 3,
            "sketched": true,
            "m": 12,
            "beta_hat": fit.beta_hat.as_slice(),
            "singulars": fit.singulars.as_slice(),
            "stable_rank": lib(stable_rank(&xr))?,
        }))
    })();
    out.push(compare(
        "pcr",
        &["pcr", "--in", p(&xrf), "--y", p(&yf), "--k", "3", "--sketch", "12", "--seed", "9"],
        expected,
    ));

    let Generated::Mixture { x: xm, .. } = generate(&Scenario::Gmm { n: 3000, p: 4, k: 2, mean_scale: 3.0 }, 2).unwrap() else {
        unreachable!()
    };
    let xmf = save(dir, "xm.fbin", &xm.transpose());
    let expected = (|| {
        let cfg = PowerConfig { seed: 4, ..PowerConfig::default() };
        Ok(serde_json::to_value(lib(fit_gmm(&xm, 2, &cfg))?).unwrap())
    })();
    out.push(compare("gmm", &["gmm", "--in", p(&xmf), "--k", "2", "--seed", "4"], expected));

    let Generated::Sbm(inst) = generate(&Scenario::Sbm { n: 200, a: 8.0, b: 0.5 }, 1).unwrap() else {
        unreachable!()
    };
    let af = save(dir, "a.fbin", &inst.adjacency);
    let expected = lib(sbm_spectral(&inst.adjacency, 2, 6)).map(|l| json!({ "labels": l }));
    out.push(compare("sbm", &["sbm", "--in", p(&af), "--k", "2", "--seed", "6"], expected));

    let Generated::Completion { instance, .. } =
        generate(&Scenario::Completion { n1: 30, n2: 20, rank: 2, p_obs: 0.5, sigma: 0.1 }, 8).unwrap()
    else {
        unreachable!()
    };
    let observed = instance.mask.zip_map(&instance.values, |m, v| if m == 1.0 { v } else { f64::NAN });
    let mf = save(dir, "m.fbin", &observed);
    let expected = (|| {
        let fit = lib(spectral_complete(&instance, None))?;
        Ok(json!({
            "p_hat": fit.p_hat,
            "singulars": fit.singulars.as_slice(),
            "m_hat": rows(&fit.m_hat),
            "warnings": fit.warnings,
        }))
    })();
    out.push(compare("complete", &["complete", "--in", p(&mf), "--k", "2"], expected));

    let Generated::Phase { instance, .. } = generate(&Scenario::PhaseSync { n: 40, sigma: 0.5 }, 3).unwrap() else {
        unreachable!()
    };
    let re = instance.c.map(|c| c.re);
    let im = instance.c.map(|c| c.im);
    let ref_ = save(dir, "re.fbin", &re);
    let imf = save(dir, "im.fbin", &im);
    let expected = (|| {
        let fit = lib(phase_sync(&lib(PhaseInstance::from_parts(&re, &im, f64::NAN))?))?;
        Ok(json!({
            "eigenvalue": fit.eigenvalue,
            "iterations": fit.iterations,
            "v_re": fit.v.iter().map(|z| z.re).collect::<Vec<_>>(),
            "v_im": fit.v.iter().map(|z| z.im).collect::<Vec<_>>(),
            "normalized_re": fit.normalized.iter().map(|z| z.re).collect::<Vec<_>>(),
            "normalized_im": fit.normalized.iter().map(|z| z.im).collect::<Vec<_>>(),
        }))
    })();
    out.push(compare("sync", &["sync", "--re", p(&ref_), "--im", p(&imf)], expected));

    let expected = (|| {
        let s = lib(sample_cov(&x, true))?.matrix;
        let fit = lib(fit_pca_factors(&s, &lib(sample_mean(&x))?, &x, 3))?;
        let sigma_u = &s - &fit.b_hat * fit.b_hat.transpose();
        let eig: Vec<f64> = lib(eig_sym(&s))?.values.iter().copied().collect();
        Ok(json!({
            "pervasiveness": lib(pervasiveness_diag(&fit.b_hat, &sigma_u))?,
            "eigenvalues": eig.clone(),
            "eigengap": eig[2] - eig[3],
            "stable_rank": lib(stable_rank(&x))?,
        }))
    })();
    out.push(compare("diag", &["diag", "--in", xs, "--k", "3"], expected));

    // simulate writes exactly the generator's output.
    let sim_dir = dir.join("sim");
    let (code, _, stderr) = farm(&["simulate", "--scenario", "fig5_farmtest", "--seed", "7", "--out", p(&sim_dir)]);
    let sim = (|| {
        if code != 0 {
            return Err(format!("exit {code}: {stderr}"));
        }
        let Generated::Factor { x, truth } = lib(generate(&Scenario::default_for("fig5_farmtest").unwrap(), 7))? else {
            unreachable!()
        };
        let written = std::fs::read(sim_dir.join("X.fbin")).map_err(|e| e.to_string())?;
        let truth_doc: Value =
            serde_json::from_str(&std::fs::read_to_string(sim_dir.join("truth.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        let expected_truth = json!({ "mu": truth.mu.as_slice(), "loadings": rows(&truth.b), "factors": rows(&truth.f) });
        Ok(written == encode_fbin(&x.transpose()) && truth_doc["truth"] == expected_truth)
    })();
    out.push(Smoke {
        name: "simulate",
        ok: matches!(sim, Ok(true)),
        detail: format!("{sim:?}"),
    });
    out
}
