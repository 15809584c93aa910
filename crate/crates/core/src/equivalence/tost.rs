//! Two one-sided t-tests on the location difference `rho = μ - μ̂_x`.

use crate::numeric::special::chi_mixture_expectation;
use crate::numeric::{normal_cdf, student_t_cdf, student_t_quantile};

use super::summary::SummarySet;
use super::{CriticalRegion, EquivalenceError, ToleranceRegion};

/// `(T-, T+)` with `T± = (ȳ - μ̂_x - tau±) / (σ̂_y / √m)`.
///
/// The simulated set is accepted iff `T+ < t_α` and `T- > t_{1-α}`
/// (`df = m - 1`).
pub fn tost_stat(
    sim: &SummarySet,
    mu_hat_x: f64,
    tol: &ToleranceRegion,
) -> Result<(f64, f64), EquivalenceError> {
    if sim.count() < 2 {
        return Err(EquivalenceError::Degenerate("TOST needs at least 2 values".into()));
    }
    let sd = sim.sd();
    if !(sd > 0.0) {
        return Err(EquivalenceError::Degenerate("simulated sd is zero".into()));
    }
    let se = sd / (sim.count() as f64).sqrt();
    let d = sim.mean() - mu_hat_x;
    Ok(((d - tol.tau_minus) / se, (d - tol.tau_plus) / se))
}

/// The TOST acceptance event as an interval on `ȳ - μ̂_x`:
/// `[tau- - t_α s/√m, tau+ + t_α s/√m]`, with `t_α < 0` the lower
/// quantile. May be empty.
pub fn tost_critical_region(
    m: usize,
    sigma_hat: f64,
    alpha: f64,
    tol: &ToleranceRegion,
) -> Result<CriticalRegion, EquivalenceError> {
    if m < 2 || !(sigma_hat > 0.0) {
        return Err(EquivalenceError::InvalidConfig(format!(
            "TOST needs m >= 2 and sigma > 0, got m = {m}, sigma = {sigma_hat}"
        )));
    }
    let t_alpha = student_t_quantile(alpha, (m - 1) as f64)?;
    let half = t_alpha * sigma_hat / (m as f64).sqrt();
    Ok(CriticalRegion { c_minus: tol.tau_minus - half, c_plus: tol.tau_plus + half, alpha })
}

/// Noncentral-t approximation to the power of the symmetric TOST:
/// `F(τ+/(σ/√m) + t_α) - F(-τ+/(σ/√m) - t_α)`, `F` the t CDF with
/// `df = m - 1` and noncentrality `√m rho / σ`, clipped to `[0, 1]`.
///
/// This treats the TOST thresholds as if the standard deviation entering
/// them were fixed. [`tost_power_exact`] gives the power of the actual
/// procedure.
pub fn tost_power(
    rho: f64,
    tau_plus: f64,
    m: usize,
    sigma_hat: f64,
    alpha: f64,
) -> Result<f64, EquivalenceError> {
    if m < 2 || !(sigma_hat > 0.0) {
        return Err(EquivalenceError::InvalidConfig(format!("m = {m}, sigma = {sigma_hat}")));
    }
    let df = (m - 1) as f64;
    let t_alpha = student_t_quantile(alpha, df)?;
    let scale = sigma_hat / (m as f64).sqrt();
    let ncp = rho / scale;
    let hi = student_t_cdf(tau_plus / scale + t_alpha, df, ncp)?;
    let lo = student_t_cdf(-tau_plus / scale - t_alpha, df, ncp)?;
    Ok((hi - lo).clamp(0.0, 1.0))
}

/// Exact acceptance probability of the TOST for normal data with mean
/// difference `rho` and standard deviation `sigma`:
/// `E_W[(Φ(A+ + t_α W) - Φ(A- - t_α W))₊]`, `A± = (tau± - rho) √m / sigma`,
/// `W = √(V / (m - 1))`, `V ~ χ²(m - 1)`.
pub fn tost_power_exact(
    rho: f64,
    tol: &ToleranceRegion,
    m: usize,
    sigma: f64,
    alpha: f64,
) -> Result<f64, EquivalenceError> {
    if m < 2 || !(sigma > 0.0) {
        return Err(EquivalenceError::InvalidConfig(format!("m = {m}, sigma = {sigma}")));
    }
    let df = (m - 1) as f64;
    let t_alpha = student_t_quantile(alpha, df)?;
    let root_m = (m as f64).sqrt();
    let a_plus = (tol.tau_plus - rho) * root_m / sigma;
    let a_minus = (tol.tau_minus - rho) * root_m / sigma;
    // the region is empty once W exceeds (A+ - A-) / (-2 t_α)
    let w_max = (a_plus - a_minus) / (-2.0 * t_alpha);
    if !(w_max > 0.0) {
        return Ok(0.0);
    }
    let v = chi_mixture_expectation(
        df,
        |w| {
            if w >= w_max {
                return 0.0;
            }
            let lo = a_minus - t_alpha * w;
            let hi = a_plus + t_alpha * w;
            if lo > 0.0 {
                (normal_cdf(-lo) - normal_cdf(-hi)).max(0.0)
            } else {
                (normal_cdf(hi) - normal_cdf(lo)).max(0.0)
            }
        },
        1e-11,
    )?;
    Ok(v.clamp(0.0, 1.0))
}

/// Log likelihood of the observed mean as a function of the location
/// difference, `-n rho² / (2 σ̂²)`.
pub fn tost_summary_loglik(rho: f64, n: usize, sigma_hat_x: f64) -> f64 {
    -(n as f64) * rho * rho / (2.0 * sigma_hat_x * sigma_hat_x)
}
