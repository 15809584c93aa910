//! Calibration of the free ABC* parameters of one test.
//!
//! Three nested searches:
//!
//! 1. `tau_minus` is bisected until the power function peaks at `rho_star`.
//! 2. `tau_plus` is bisected until the peak power equals the target (0.9),
//!    recalibrating `tau_minus` at every trial value.
//! 3. `m` is binary-searched on the signed KL divergence between the
//!    normalized summary likelihood and the normalized power function,
//!    recalibrating both tolerances at every trial value.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equivalence::{
    CriticalRegion, EquivalenceError, ObservedStats, TestConfig, TestKind, ToleranceRegion,
};
use crate::numeric::{find_root, golden_section_max, integrate, linspace, logspace, Interval, NumericError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error(transparent)]
    Equivalence(#[from] EquivalenceError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("bracket search failed: {0}")]
    Bracket(String),
    #[error("KL divergence is infinite: {0}")]
    Divergent(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    /// Tolerance on the power mode (rho scale) and on the peak power.
    pub epsilon: f64,
    pub target_power: f64,
    pub max_m_doublings: usize,
    /// Iteration cap of the `m` search.
    pub max_m_iterations: usize,
    pub max_bisections: usize,
    pub kl_quad_tol: f64,
    /// Image of the prior support in rho-space, if bounded.
    pub rho_support: Option<Interval>,
    /// Likelihood mass below this fraction of the peak is truncated.
    pub likelihood_floor: f64,
    pub mode_grid_points: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            target_power: 0.9,
            max_m_doublings: 16,
            max_m_iterations: 64,
            max_bisections: 100,
            kl_quad_tol: 1e-10,
            rho_support: None,
            likelihood_floor: 1e-12,
            mode_grid_points: 200,
        }
    }
}

impl CalibrationSettings {
    pub fn with_rho_support(mut self, support: Interval) -> Self {
        self.rho_support = Some(support);
        self
    }

    fn validate(&self, alpha: f64) -> Result<(), CalibrationError> {
        if !(self.epsilon > 0.0) {
            return Err(CalibrationError::InvalidSettings(format!("epsilon = {}", self.epsilon)));
        }
        if !(self.target_power > alpha && self.target_power < 1.0) {
            return Err(CalibrationError::InvalidSettings(format!(
                "target power {} must lie in (alpha, 1)",
                self.target_power
            )));
        }
        if self.mode_grid_points < 3 {
            return Err(CalibrationError::InvalidSettings("mode grid needs >= 3 points".into()));
        }
        Ok(())
    }
}

/// Calibrated parameters of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub kind: TestKind,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub tau_minus: f64,
    pub tau_plus: f64,
    pub rho_star: f64,
    pub critical: CriticalRegion,
    pub predicted_kl: f64,
    pub power_at_rho_star: f64,
    pub power_mode: f64,
    pub converged: bool,
    pub m_iterations: usize,
    pub sigma_hat: Option<f64>,
    pub observed: ObservedStats,
    pub settings: CalibrationSettings,
}

impl CalibrationReport {
    /// The calibrated test configuration.
    pub fn config(&self) -> TestConfig {
        TestConfig {
            kind: self.kind,
            n: self.n,
            m: self.m,
            alpha: self.alpha,
            tolerance: ToleranceRegion {
                tau_minus: self.tau_minus,
                tau_plus: self.tau_plus,
                rho_star: self.rho_star,
            },
            aux: crate::equivalence::Aux { sigma_hat: self.sigma_hat },
        }
    }
}

/// Location and height of the power maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerMode {
    pub rho: f64,
    pub power: f64,
}

impl PowerMode {
    /// Fewer than twice `alpha` at the peak leaves the mode ill-determined.
    pub fn is_flat(&self, alpha: f64) -> bool {
        !(self.power >= 2.0 * alpha)
    }
}

fn mode_grid(config: &TestConfig, points: usize) -> Vec<f64> {
    let t = &config.tolerance;
    match config.kind {
        TestKind::ChiSqDispersion => logspace(t.tau_minus * 0.8, t.tau_plus * 1.25, points),
        _ => {
            let pad = 0.1 * (t.tau_plus - t.tau_minus).max(1e-6);
            linspace(t.tau_minus - pad, t.tau_plus + pad, points)
        }
    }
}

/// Maximiser of the power function: coarse grid, then golden section between
/// the neighbours of the best grid point.
pub fn power_mode(
    config: &TestConfig,
    region: &CriticalRegion,
    settings: &CalibrationSettings,
) -> Result<PowerMode, CalibrationError> {
    let grid = mode_grid(config, settings.mode_grid_points);
    let mut values = Vec::with_capacity(grid.len());
    for &rho in &grid {
        values.push(config.power(rho, region)?);
    }
    let (best, &best_val) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    if !(best_val > 0.0) {
        return Ok(PowerMode { rho: f64::NAN, power: 0.0 });
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let f = |rho: f64| config.power(rho, region).unwrap_or(f64::NEG_INFINITY);
    let (rho, power) = golden_section_max(f, lo, hi, settings.epsilon * 1e-3);
    Ok(PowerMode { rho, power })
}

fn tolerance(config: &TestConfig, tau_minus: f64, tau_plus: f64) -> ToleranceRegion {
    ToleranceRegion { tau_minus, tau_plus, rho_star: config.kind.rho_star() }
}

/// Find `tau_minus` such that the power peaks at `rho_star`, keeping
/// `config.tolerance.tau_plus` and `config.m` fixed.
///
/// The upper end of the bracket is `rho_star`; the lower end moves
/// geometrically away from `rho_star` until the mode falls below it.
pub fn calibrate_tau_minus(
    config: &TestConfig,
    settings: &CalibrationSettings,
) -> Result<(f64, CriticalRegion), CalibrationError> {
    settings.validate(config.alpha)?;
    let rho_star = config.kind.rho_star();
    let tau_plus = config.tolerance.tau_plus;
    if !(tau_plus > rho_star) {
        return Err(CalibrationError::InvalidSettings(format!(
            "tau_plus {tau_plus} must exceed rho* {rho_star}"
        )));
    }
    // signed offset of the mode from rho*; empty or flat regions count as
    // "too narrow", which pushes tau_minus down
    let offset = |tau_minus: f64| -> Result<(f64, CriticalRegion), CalibrationError> {
        let trial = config.with_tolerance(tolerance(config, tau_minus, tau_plus));
        let region = trial.critical_region()?;
        let mode = power_mode(&trial, &region, settings)?;
        let off = if mode.rho.is_finite() { mode.rho - rho_star } else { f64::INFINITY };
        Ok((off, region))
    };
    let below = |k: i32| -> f64 {
        match config.kind {
            TestKind::ChiSqDispersion => rho_star * 0.5f64.powi(k),
            _ => rho_star - (tau_plus - rho_star) * 2f64.powi(k - 1),
        }
    };
    let mut lo = f64::NAN;
    for k in 1..=60 {
        let candidate = below(k);
        let (off, region) = offset(candidate)?;
        if off.abs() <= settings.epsilon * 1e-2 {
            return Ok((candidate, region));
        }
        if off < 0.0 {
            lo = candidate;
            break;
        }
    }
    if lo.is_nan() {
        return Err(CalibrationError::Bracket(format!(
            "no tau_minus puts the power mode below rho* (tau_plus = {tau_plus})"
        )));
    }
    let mut hi = rho_star;
    let mut best: Option<(f64, f64, CriticalRegion)> = None;
    for _ in 0..settings.max_bisections {
        let mid = 0.5 * (lo + hi);
        let (off, region) = offset(mid)?;
        if best.as_ref().is_none_or(|b| off.abs() < b.1.abs()) {
            best = Some((mid, off, region));
        }
        if off.abs() <= settings.epsilon * 1e-2 || (hi - lo) < 1e-13 * (1.0 + rho_star.abs()) {
            return Ok((mid, region));
        }
        if off > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (tau, _, region) = best.expect("at least one bisection step");
    Ok((tau, region))
}

/// Peak power `gamma(tau_plus)` after centering the mode at `rho_star`.
pub fn peak_power(
    config: &TestConfig,
    tau_plus: f64,
    settings: &CalibrationSettings,
) -> Result<(f64, f64, CriticalRegion), CalibrationError> {
    let rho_star = config.kind.rho_star();
    let trial = config.with_tolerance(tolerance(config, rho_star, tau_plus));
    let (tau_minus, region) = calibrate_tau_minus(&trial, settings)?;
    let tuned = trial.with_tolerance(tolerance(config, tau_minus, tau_plus));
    Ok((tuned.power(rho_star, &region)?, tau_minus, region))
}

fn tau_plus_step(config: &TestConfig) -> f64 {
    let m = config.m as f64;
    match config.kind {
        TestKind::ChiSqDispersion => 0.25,
        TestKind::TostLocation => config.aux.sigma_hat.unwrap_or(1.0) / m.sqrt(),
        TestKind::ToszCorrelation => 1.0 / (m - 3.0).max(1.0).sqrt(),
    }
}

/// Find `tau_plus` (and its `tau_minus`) such that the peak power equals
/// `settings.target_power`, at fixed `config.m`.
pub fn calibrate_tau_plus(
    config: &TestConfig,
    settings: &CalibrationSettings,
) -> Result<(f64, f64, CriticalRegion), CalibrationError> {
    settings.validate(config.alpha)?;
    let rho_star = config.kind.rho_star();
    let target = settings.target_power;
    let step = tau_plus_step(config);
    // gamma(rho*) <= alpha, so rho* itself is a valid lower end
    let mut lo = rho_star;
    let mut hi = f64::NAN;
    let mut hi_fit = None;
    for k in 0..60 {
        let candidate = rho_star + step * 2f64.powi(k);
        let (gamma, tau_minus, region) = peak_power(config, candidate, settings)?;
        if gamma > target {
            hi = candidate;
            hi_fit = Some((tau_minus, region, gamma));
            break;
        }
        lo = candidate;
    }
    let Some(mut best) = hi_fit.map(|(tm, r, g)| (hi, tm, r, g)) else {
        return Err(CalibrationError::Bracket(format!(
            "peak power never exceeds {target} for m = {}",
            config.m
        )));
    };
    for _ in 0..settings.max_bisections {
        let mid = 0.5 * (lo + hi);
        let (gamma, tau_minus, region) = peak_power(config, mid, settings)?;
        if (gamma - target).abs() < (best.3 - target).abs() {
            best = (mid, tau_minus, region, gamma);
        }
        if (gamma - target).abs() <= settings.epsilon * 1e-2 || (hi - lo) < 1e-13 * (1.0 + mid.abs()) {
            break;
        }
        if gamma > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((best.1, best.0, best.2))
}

/// Integration range for the KL: the rho-image of the prior intersected with
/// the region where the likelihood exceeds `likelihood_floor` of its peak.
pub fn kl_support(
    config: &TestConfig,
    observed: &ObservedStats,
    settings: &CalibrationSettings,
) -> Result<Interval, CalibrationError> {
    let rho_star = config.kind.rho_star();
    let peak = config.summary_loglik(rho_star, observed)?;
    let cut = settings.likelihood_floor.ln();
    let rel = |rho: f64| -> f64 {
        config.summary_loglik(rho, observed).map(|l| l - peak - cut).unwrap_or(-1.0)
    };
    let bound = |direction: f64| -> Result<f64, CalibrationError> {
        let mut step = 0.1f64;
        for _ in 0..200 {
            let probe = match config.kind {
                TestKind::ChiSqDispersion => rho_star * (1.0f64 + step).powf(direction),
                _ => rho_star + direction * step,
            };
            if rel(probe) < 0.0 {
                let span = Interval::new(probe.min(rho_star), probe.max(rho_star))?;
                return Ok(find_root(rel, span, 1e-12)?);
            }
            step *= 1.5;
        }
        Err(CalibrationError::Bracket("likelihood does not decay".into()))
    };
    let full = Interval::new(bound(-1.0)?, bound(1.0)?)?;
    match settings.rho_support {
        Some(prior) => full
            .intersect(&prior)
            .ok_or_else(|| CalibrationError::Bracket("prior support misses the likelihood".into())),
        None => Ok(full),
    }
}

/// KL divergence of the normalized summary likelihood from the normalized
/// power function over [`kl_support`].
pub fn kl_power_vs_likelihood(
    config: &TestConfig,
    region: &CriticalRegion,
    observed: &ObservedStats,
    settings: &CalibrationSettings,
) -> Result<f64, CalibrationError> {
    let support = kl_support(config, observed, settings)?;
    let peak = config.summary_loglik(config.kind.rho_star(), observed)?;
    let loglik = |rho: f64| config.summary_loglik(rho, observed).map(|l| l - peak).unwrap_or(f64::NEG_INFINITY);
    let power = |rho: f64| config.power(rho, region).unwrap_or(f64::NAN);
    let tol = settings.kl_quad_tol;
    let c_lik = integrate(|r| loglik(r).exp(), support.lo, support.hi, tol)?;
    let c_abc = integrate(power, support.lo, support.hi, tol)?;
    if !(c_abc > 0.0) {
        return Err(CalibrationError::Divergent("power vanishes on the support".into()));
    }
    let (log_c_lik, log_c_abc) = (c_lik.ln(), c_abc.ln());
    let zero_power = support
        .linspace(2001)
        .into_iter()
        .any(|r| !(power(r) > 0.0) && loglik(r).exp() > tol);
    if zero_power {
        return Err(CalibrationError::Divergent("power is zero where the likelihood has mass".into()));
    }
    let kl = integrate(
        |r| {
            let ll = loglik(r);
            let p = power(r);
            if !(p > 0.0) {
                return 0.0;
            }
            let q = (ll - log_c_lik).exp();
            q * (ll - log_c_lik - p.ln() + log_c_abc)
        },
        support.lo,
        support.hi,
        tol,
    )?;
    Ok(kl.max(0.0))
}

/// Tolerances, critical region and KL of a test calibrated at fixed `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedMCalibration {
    pub m: usize,
    pub tau_minus: f64,
    pub tau_plus: f64,
    pub region: CriticalRegion,
    pub kl: f64,
}

/// Calibrate both tolerances at the given `m` and evaluate the KL.
pub fn calibrate_at_m(
    template: &TestConfig,
    m: usize,
    observed: &ObservedStats,
    settings: &CalibrationSettings,
) -> Result<FixedMCalibration, CalibrationError> {
    let config = template.with_m(m);
    let (tau_minus, tau_plus, region) = calibrate_tau_plus(&config, settings)?;
    let tuned = config.with_tolerance(tolerance(&config, tau_minus, tau_plus));
    let kl = kl_power_vs_likelihood(&tuned, &region, observed, settings)?;
    Ok(FixedMCalibration { m, tau_minus, tau_plus, region, kl })
}

/// Memoized calibrations along the `m` search.
struct KlCache<'a> {
    template: &'a TestConfig,
    observed: &'a ObservedStats,
    settings: &'a CalibrationSettings,
    fits: BTreeMap<usize, FixedMCalibration>,
}

impl KlCache<'_> {
    fn fit(&mut self, m: usize) -> Result<FixedMCalibration, CalibrationError> {
        if let Some(f) = self.fits.get(&m) {
            return Ok(*f);
        }
        let f = calibrate_at_m(self.template, m, self.observed, self.settings)?;
        self.fits.insert(m, f);
        Ok(f)
    }

    fn signed(&mut self, m: usize) -> Result<f64, CalibrationError> {
        let here = self.fit(m)?.kl;
        let next = self.fit(m + 1)?.kl;
        Ok(if next > here { here } else { -here })
    }
}

/// `sign(KL(m + 1) - KL(m)) * KL(m)`.
pub fn signed_kl(
    template: &TestConfig,
    m: usize,
    observed: &ObservedStats,
    settings: &CalibrationSettings,
) -> Result<f64, CalibrationError> {
    let mut cache = KlCache { template, observed, settings, fits: BTreeMap::new() };
    cache.signed(m)
}

/// Full calibration: search `m` from `m_l = n`, doubling `m_u` until the
/// signed KL turns positive, then bisect with `floor((m_l + m_u) / 2)`.
pub fn calibrate_m(
    template: &TestConfig,
    observed: &ObservedStats,
    settings: &CalibrationSettings,
) -> Result<CalibrationReport, CalibrationError> {
    settings.validate(template.alpha)?;
    let mut cache = KlCache { template, observed, settings, fits: BTreeMap::new() };
    let n = template.n.max(4);
    let mut m_lo = n;
    let mut converged = true;
    let mut iterations = 0;
    if cache.signed(m_lo)? < 0.0 {
        let mut m_hi = 2 * m_lo;
        let mut doublings = 0;
        while cache.signed(m_hi)? < 0.0 {
            m_lo = m_hi;
            m_hi *= 2;
            doublings += 1;
            if doublings >= settings.max_m_doublings {
                return Err(CalibrationError::Bracket(format!(
                    "signed KL still negative at m = {m_hi}"
                )));
            }
        }
        while m_hi - m_lo > 1 {
            if iterations >= settings.max_m_iterations {
                converged = false;
                break;
            }
            iterations += 1;
            let mid = (m_lo + m_hi) / 2;
            if cache.signed(mid)? < 0.0 {
                m_lo = mid;
            } else {
                m_hi = mid;
            }
        }
    }
    let best = cache
        .fits
        .values()
        .min_by(|a, b| a.kl.total_cmp(&b.kl))
        .copied()
        .expect("at least one calibration");
    let mut report = report_for(template, &best, observed, settings)?;
    report.converged = converged;
    report.m_iterations = iterations;
    Ok(report)
}

/// Report for a test whose `m`, tolerances and region are already fixed.
pub fn report_for(
    template: &TestConfig,
    fit: &FixedMCalibration,
    observed: &ObservedStats,
    settings: &CalibrationSettings,
) -> Result<CalibrationReport, CalibrationError> {
    let config = template
        .with_m(fit.m)
        .with_tolerance(tolerance(template, fit.tau_minus, fit.tau_plus));
    let mode = power_mode(&config, &fit.region, settings)?;
    Ok(CalibrationReport {
        kind: template.kind,
        n: template.n,
        m: fit.m,
        alpha: template.alpha,
        tau_minus: fit.tau_minus,
        tau_plus: fit.tau_plus,
        rho_star: template.kind.rho_star(),
        critical: fit.region,
        predicted_kl: fit.kl,
        power_at_rho_star: config.power(template.kind.rho_star(), &fit.region)?,
        power_mode: mode.rho,
        converged: true,
        m_iterations: 0,
        sigma_hat: template.aux.sigma_hat,
        observed: *observed,
        settings: settings.clone(),
    })
}

/// Critical region and KL at fixed `m` and tolerances, without calibrating.
pub fn evaluate_fixed(
    template: &TestConfig,
    m: usize,
    tau_minus: f64,
    tau_plus: f64,
    observed: &ObservedStats,
    settings: &CalibrationSettings,
) -> Result<FixedMCalibration, CalibrationError> {
    let config = template.with_m(m).with_tolerance(ToleranceRegion::new(
        tau_minus,
        tau_plus,
        template.kind.rho_star(),
    )?);
    let region = config.critical_region()?;
    let kl = kl_power_vs_likelihood(&config, &region, observed, settings)?;
    Ok(FixedMCalibration { m, tau_minus, tau_plus, region, kl })
}
