//! Fisher-z equivalence test on a correlation difference
//! `rho = atanh(ν) - atanh(ν̂_x)`.

use crate::numeric::{normal_interval, normal_quantile};

use super::summary::PairSet;
use super::{CriticalRegion, EquivalenceError, ToleranceRegion};

/// `atanh(r)`; fails for `|r| >= 1` or NaN.
pub fn fisher_z(r: f64) -> Result<f64, EquivalenceError> {
    if r.abs() < 1.0 {
        Ok(r.atanh())
    } else {
        Err(EquivalenceError::Degenerate(format!("Fisher z undefined for r = {r}")))
    }
}

fn standard_error(n_tilde: usize) -> Result<f64, EquivalenceError> {
    if n_tilde < 4 {
        return Err(EquivalenceError::InvalidConfig(format!(
            "Fisher-z test needs >= 4 pairs, got {n_tilde}"
        )));
    }
    Ok(1.0 / ((n_tilde - 3) as f64).sqrt())
}

/// `(T-, T+)` with `T± = (z_y - rho_hat_x - tau±) √(ñ - 3)`; accepted iff
/// `T+ < u_α` and `T- > u_{1-α}`.
pub fn tosz_stat(
    sim_pairs: &PairSet,
    rho_hat_x: f64,
    tol: &ToleranceRegion,
) -> Result<(f64, f64), EquivalenceError> {
    let se = standard_error(sim_pairs.count())?;
    let d = fisher_z(sim_pairs.pearson())? - rho_hat_x;
    Ok(((d - tol.tau_minus) / se, (d - tol.tau_plus) / se))
}

/// The acceptance event as an interval on `z_y - rho_hat_x`:
/// `[tau- - u_α se, tau+ + u_α se]`, `u_α < 0`. Empty when the tolerance is
/// narrower than `-2 u_α se`.
pub fn tosz_critical_region(
    n_tilde: usize,
    alpha: f64,
    tol: &ToleranceRegion,
) -> Result<CriticalRegion, EquivalenceError> {
    let se = standard_error(n_tilde)?;
    let u = normal_quantile(alpha)?;
    Ok(CriticalRegion { c_minus: tol.tau_minus - u * se, c_plus: tol.tau_plus + u * se, alpha })
}

/// Normal-approximation power of the symmetric test,
/// `Φ((τ+ - rho)√(ñ-3) + u_α) - Φ(-(τ+ + rho)√(ñ-3) - u_α)`, clipped to `[0, 1]`.
pub fn tosz_power(
    rho: f64,
    tau_plus: f64,
    n_tilde: usize,
    alpha: f64,
) -> Result<f64, EquivalenceError> {
    let tol = ToleranceRegion { tau_minus: -tau_plus, tau_plus, rho_star: 0.0 };
    let region = tosz_critical_region(n_tilde, alpha, &tol)?;
    Ok(tosz_power_region(rho, &region, n_tilde))
}

/// Normal-approximation power for an arbitrary solved region.
pub fn tosz_power_region(rho: f64, region: &CriticalRegion, n_tilde: usize) -> f64 {
    let scale = ((n_tilde.max(4) - 3) as f64).sqrt();
    normal_interval((region.c_minus - rho) * scale, (region.c_plus - rho) * scale)
}

/// Log likelihood of the observed Fisher z as a function of the difference,
/// `-(n - 3) rho² / 2`.
pub fn tosz_summary_loglik(rho: f64, n: usize) -> f64 {
    -((n.max(4) - 3) as f64) * rho * rho / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{normal_cdf, RngStream};

    #[test]
    fn fisher_z_basics() {
        assert_eq!(fisher_z(0.0).unwrap(), 0.0);
        assert!(fisher_z(1.0).is_err());
        assert!(fisher_z(f64::NAN).is_err());
    }

    #[test]
    fn power_matches_closed_form_and_is_symmetric() {
        let (tau, n, alpha) = (0.239, 278usize, 0.01);
        let s = ((n - 3) as f64).sqrt();
        let u = normal_quantile(alpha).unwrap();
        for rho in [0.0, 0.05, 0.2] {
            let closed = normal_cdf((tau - rho) * s + u) - normal_cdf(-(tau + rho) * s - u);
            assert!((tosz_power(rho, tau, n, alpha).unwrap() - closed).abs() < 1e-12);
            let a = tosz_power(-rho, tau, n, alpha).unwrap();
            assert!((a - closed).abs() < 1e-12);
        }
        let at_boundary = tosz_power(tau, tau, n, alpha).unwrap();
        assert!((at_boundary - alpha).abs() < 1e-6);
    }

    #[test]
    fn narrow_tolerance_gives_empty_region() {
        let tol = ToleranceRegion::symmetric(0.0, 0.1).unwrap();
        let r = tosz_critical_region(49, 0.01, &tol).unwrap();
        assert!(r.is_empty());
        assert_eq!(tosz_power(0.0, 0.1, 49, 0.01).unwrap(), 0.0);
    }

    #[test]
    fn fisher_z_variance_is_one_over_n_minus_three() {
        let n = 60;
        let mut rng = RngStream::new(17, 0);
        let reps = 20_000;
        let zs: Vec<f64> = (0..reps)
            .map(|_| {
                let pairs = (0..n)
                    .map(|_| {
                        let u = rng.std_normal();
                        (u, 0.3 * u + (1.0f64 - 0.09).sqrt() * rng.std_normal())
                    })
                    .collect();
                fisher_z(PairSet::new(pairs).pearson()).unwrap()
            })
            .collect();
        let mean = zs.iter().sum::<f64>() / reps as f64;
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let target = 1.0 / (n - 3) as f64;
        // sd of a sample variance of near-normal draws is var * sqrt(2 / reps)
        assert!((var - target).abs() < 4.0 * target * (2.0 / reps as f64).sqrt(), "var = {var}");
    }
}
