//! Browser bindings for three interactive views: branch curves with the
//! cluster radius, the preconditioned spectrum, and sorted eigenvalue
//! magnitudes against their symbol prediction.
//!
//! Every view returns a flat `Vec<f64>` so the page can hand it straight to a
//! canvas without any serialization layer. The `*_data` functions are plain
//! Rust and are what the native tests exercise.

use irk_precond::fem::assemble_q1;
use irk_precond::spectrum::{branch_eigenvalues, preconditioned_spectrum, radius_estimate, MuGrid, SpectrumMode};
use irk_precond::{BoundaryMode, Result, StageSystem, TauRule, TriangularFactorization};
use wasm_bindgen::prelude::*;

/// Largest grid the page may request; the structured spectrum of a
/// `129 x 129` grid with ten stages is still well under a second.
pub const MAX_N_SIDE: usize = 129;

/// Branch values on a log-spaced μ grid.
///
/// Layout: `[radius, mu_star, then per point: mu, re_1, im_1, ..., re_{q-1}, im_{q-1}]`.
pub fn branch_curves_data(q: usize, log_mu_min: f64, log_mu_max: f64, points: usize) -> Result<Vec<f64>> {
    let fact = TriangularFactorization::radau(q)?;
    let est = radius_estimate(q, &MuGrid::default())?;
    let mut out = vec![est.radius, est.mu_star];
    let points = points.max(2);
    for k in 0..points {
        let s = log_mu_min + (log_mu_max - log_mu_min) * k as f64 / (points - 1) as f64;
        let mu = 10f64.powf(s);
        out.push(mu);
        for z in branch_eigenvalues(mu, &fact)? {
            out.push(z.re);
            out.push(z.im);
        }
    }
    Ok(out)
}

fn system(q: usize, n_side: usize, bc: &str, tau_rule: &str) -> Result<StageSystem> {
    if n_side > MAX_N_SIDE {
        return Err(irk_precond::Error::Range {
            what: "n_side",
            value: n_side as i64,
            min: 2,
            max: MAX_N_SIDE as i64,
        });
    }
    let bc: BoundaryMode = bc.parse()?;
    let rule: TauRule = tau_rule.parse()?;
    let fact = TriangularFactorization::radau(q)?;
    let ops = assemble_q1(n_side, bc)?;
    let tau = rule.resolve(q, ops.h)?;
    StageSystem::new(fact, ops, tau)
}

/// Eigenvalues of the preconditioned operator.
///
/// Layout: `[tau, radius, re_0, im_0, re_1, im_1, ...]`.
pub fn spectrum_data(q: usize, n_side: usize, bc: &str, tau_rule: &str) -> Result<Vec<f64>> {
    let sys = system(q, n_side, bc, tau_rule)?;
    let report = preconditioned_spectrum(&sys, SpectrumMode::Structured)?;
    let mut out = Vec::with_capacity(2 + 2 * report.eigenvalues.len());
    out.push(sys.tau);
    out.push(report.radius);
    for z in &report.eigenvalues {
        out.push(z.re);
        out.push(z.im);
    }
    Ok(out)
}

/// Sorted magnitudes `E1` (computed) and `E2` (symbol prediction).
///
/// Layout: `[len, E1..., E2...]`; both halves have `len` entries.
pub fn symbol_overlay_data(q: usize, n_side: usize, bc: &str, tau_rule: &str) -> Result<Vec<f64>> {
    let sys = system(q, n_side, bc, tau_rule)?;
    let report = preconditioned_spectrum(&sys, SpectrumMode::Structured)?;
    let len = report.e1.len().min(report.e2.len());
    let mut out = Vec::with_capacity(1 + 2 * len);
    out.push(len as f64);
    out.extend_from_slice(&report.e1[..len]);
    out.extend_from_slice(&report.e2[..len]);
    Ok(out)
}

fn js(r: Result<Vec<f64>>) -> std::result::Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn branch_curves(q: usize, log_mu_min: f64, log_mu_max: f64, points: usize) -> std::result::Result<Vec<f64>, JsError> {
    js(branch_curves_data(q, log_mu_min, log_mu_max, points))
}

#[wasm_bindgen]
pub fn spectrum(q: usize, n_side: usize, bc: &str, tau_rule: &str) -> std::result::Result<Vec<f64>, JsError> {
    js(spectrum_data(q, n_side, bc, tau_rule))
}

#[wasm_bindgen]
pub fn symbol_overlay(q: usize, n_side: usize, bc: &str, tau_rule: &str) -> std::result::Result<Vec<f64>, JsError> {
    js(symbol_overlay_data(q, n_side, bc, tau_rule))
}
