//! WebAssembly entry points for the browser demo. Every export takes plain
//! numbers and returns a JSON string; failures come back as
//! `{"error": "..."}` so the page never has to catch exceptions.

use farm_core::datagen::{generate, Generated, Scenario};
use farm_core::factor::k_ratio;
use farm_core::farmtest::{farmtest, naive_t_stats, FarmTestConfig};
use farm_core::linalg::eig_sym;
use farm_core::robust::{elementwise_robust_cov, sample_cov, DEFAULT_ELEMENTWISE_TAU_SCALE};
use farm_core::spectral::{label_agreement, sbm_exact_recovery_threshold, sbm_spectral};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest sizes the page may request; keeps the browser responsive.
pub const MAX_SBM_NODES: usize = 1500;
pub const MAX_DIM: usize = 600;

fn respond(result: Result<Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

fn bounded(what: &str, v: usize, max: usize) -> Result<usize, String> {
    if v == 0 || v > max {
        Err(format!("{what} must lie in [1, {max}], got {v}"))
    } else {
        Ok(v)
    }
}

/// Spectral clustering of a two-block SBM with edge probabilities
/// `a log n / n` and `b log n / n`.
#[wasm_bindgen]
pub fn sbm_explore(n: usize, a: f64, b: f64, seed: u64) -> String {
    respond((|| {
        let n = bounded("n", n, MAX_SBM_NODES)?;
        let Generated::Sbm(inst) = generate(&Scenario::Sbm { n, a, b }, seed).map_err(|e| e.to_string())? else {
            unreachable!()
        };
        let labels = sbm_spectral(&inst.adjacency, 2, seed).map_err(|e| e.to_string())?;
        let truth = inst.truth.unwrap_or_default();
        let agreement = label_agreement(&labels, &truth).map_err(|e| e.to_string())?;
        let regime = sbm_exact_recovery_threshold(a, b).ok();
        let degree = inst.adjacency.row_iter().map(|r| r.sum()).sum::<f64>() / n as f64;
        Ok(json!({
            "labels": labels,
            "truth": truth,
            "agreement": agreement,
            "exact": agreement == 1.0,
            "regime": regime,
            "gap": a.sqrt() - b.sqrt(),
            "mean_degree": degree,
        }))
    })())
}

/// Leading sample eigenvalues of the two-factor scree setting and the
/// ratio estimate of the number of factors.
#[wasm_bindgen]
pub fn factor_scree(n: usize, p: usize, seed: u64, shown: usize) -> String {
    respond((|| {
        let n = bounded("n", n, 4 * MAX_DIM)?;
        let p = bounded("p", p, MAX_DIM)?;
        let Generated::Factor { x, .. } = generate(&Scenario::Fig1Factor { n, p, k: 2 }, seed).map_err(|e| e.to_string())?
        else {
            unreachable!()
        };
        let s = sample_cov(&x, true).map_err(|e| e.to_string())?.matrix;
        let eig: Vec<f64> = eig_sym(&s).map_err(|e| e.to_string())?.values.iter().copied().collect();
        let k_max = 8.min(eig.len() - 1).max(1);
        let sel = k_ratio(&eig, k_max).map_err(|e| e.to_string())?;
        Ok(json!({
            "eigenvalues": eig.iter().take(shown.max(1)).collect::<Vec<_>>(),
            "k_hat": sel.k_hat,
            "ratios": sel.criterion,
        }))
    })())
}

/// FarmTest on the heavy-tailed multiple-testing setting: the FDP^A curve,
/// the critical value and the realized false discovery proportion.
#[wasm_bindgen]
pub fn farmtest_curve(n: usize, p: usize, n_signal: usize, signal: f64, alpha: f64, seed: u64) -> String {
    respond((|| {
        let n = bounded("n", n, MAX_DIM)?;
        let p = bounded("p", p, MAX_DIM)?;
        let scenario = Scenario::Fig5Farmtest { n, p, k: 3, n_signal: n_signal.min(p), signal };
        let Generated::Factor { x, .. } = generate(&scenario, seed).map_err(|e| e.to_string())? else {
            unreachable!()
        };
        let s = elementwise_robust_cov(&x, DEFAULT_ELEMENTWISE_TAU_SCALE).map_err(|e| e.to_string())?.matrix;
        let report = farmtest(&x, &s, 3, alpha, &FarmTestConfig::default()).map_err(|e| e.to_string())?;
        let false_hits = report.rejected.iter().filter(|&&j| j >= n_signal).count();
        let curve: Vec<[f64; 2]> = report.fdp_curve.iter().step_by(8).map(|&(z, f)| [z, f]).collect();
        Ok(json!({
            "curve": curve,
            "z_alpha": if report.z_alpha.is_finite() { Value::from(report.z_alpha) } else { Value::Null },
            "rejected": report.rejected.len(),
            "false_discoveries": false_hits,
            "fdp": false_hits as f64 / report.rejected.len().max(1) as f64,
            "pi0_hat": report.pi0_hat,
            "adjusted": report.t_stats,
            "naive": naive_t_stats(&x),
        }))
    })())
}
