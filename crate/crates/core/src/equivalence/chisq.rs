//! Chi-square dispersion test on the variance ratio `rho = σ² / σ̂²_x`.
//!
//! `T = S²(y) / S²(x)` and `(n / rho) T ~ χ²(m - 1)`.

use crate::numeric::{chi2_interval, chi2_isf, chi2_sf, find_root, Interval};

use super::summary::SummarySet;
use super::{CriticalRegion, EquivalenceError, ToleranceRegion};

/// `S²(sim) / S²(obs)` with centered sums of squares.
pub fn chi2_stat(sim: &SummarySet, obs: &SummarySet) -> Result<f64, EquivalenceError> {
    if obs.count() < 2 {
        return Err(EquivalenceError::Degenerate("observed set has fewer than 2 values".into()));
    }
    chi2_stat_from_parts(sim, obs.sum_of_squares())
}

pub(crate) fn chi2_stat_from_parts(sim: &SummarySet, obs_ss: f64) -> Result<f64, EquivalenceError> {
    if sim.count() < 2 {
        return Err(EquivalenceError::Degenerate("simulated set has fewer than 2 values".into()));
    }
    if !(obs_ss > 0.0) {
        return Err(EquivalenceError::Degenerate("observed sum of squares is zero".into()));
    }
    Ok(sim.sum_of_squares() / obs_ss)
}

/// Solve `F(n c+ / tau) - F(n c- / tau) = alpha` at both `tau = tau_minus`
/// and `tau = tau_plus`, `F` the χ²(m - 1) CDF.
///
/// For a trial `c-` the `tau_plus` equation fixes `c+` by inverting the upper
/// tail; the remaining `tau_minus` equation is monotone in `c-` and is solved
/// by bracketed root finding.
pub fn chi2_critical_region(
    n: usize,
    m: usize,
    alpha: f64,
    tol: &ToleranceRegion,
) -> Result<CriticalRegion, EquivalenceError> {
    let (a, b) = (tol.tau_minus, tol.tau_plus);
    if !(a > 0.0) || !(a < b) {
        return Err(EquivalenceError::InvalidConfig(format!(
            "need 0 < tau_minus < tau_plus, got [{a}, {b}]"
        )));
    }
    if !(alpha > 0.0 && alpha < 0.5) || m < 2 {
        return Err(EquivalenceError::InvalidConfig(format!("alpha = {alpha}, m = {m}")));
    }
    let nf = n as f64;
    let df = (m - 1) as f64;
    let c_plus_of = |c_minus: f64| -> Result<f64, EquivalenceError> {
        let q = chi2_sf(nf * c_minus / b, df)? - alpha;
        if q <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(b * chi2_isf(q, df)? / nf)
    };
    let excess_at_lower = |c_minus: f64| -> f64 {
        match c_plus_of(c_minus) {
            Ok(c_plus) => {
                chi2_interval(nf * c_minus / a, nf * c_plus / a, df).unwrap_or(f64::NAN) - alpha
            }
            Err(_) => f64::NAN,
        }
    };
    let c_max = b * chi2_isf(alpha, df)? / nf;
    let hi = c_max * (1.0 - 1e-12);
    if !(excess_at_lower(0.0) > 0.0 && excess_at_lower(hi) < 0.0) {
        return Err(EquivalenceError::NoSolution(format!(
            "size curves do not cross for n = {n}, m = {m}, tau = [{a}, {b}]"
        )));
    }
    let c_minus = find_root(excess_at_lower, Interval::new(0.0, hi)?, 1e-14 * c_max)?;
    let c_plus = c_plus_of(c_minus)?;
    Ok(CriticalRegion { c_minus, c_plus, alpha })
}

/// Acceptance probability `F(n c+ / rho) - F(n c- / rho)`.
pub fn chi2_power(
    rho: f64,
    region: &CriticalRegion,
    n: usize,
    m: usize,
) -> Result<f64, EquivalenceError> {
    if !(rho > 0.0) || m < 2 {
        return Err(EquivalenceError::InvalidConfig(format!("chi2 power needs rho > 0, got {rho}")));
    }
    if region.is_empty() {
        return Ok(0.0);
    }
    let nf = n as f64;
    Ok(chi2_interval(nf * region.c_minus / rho, nf * region.c_plus / rho, (m - 1) as f64)?)
}

/// Log likelihood of a mean-zero normal sample of size `n` with sum of
/// squares `s2x`, as a function of `rho = σ² / (s2x / n)`:
/// `-(n/2) log(2π σ²) - s2x / (2σ²)`, which is `-(n/2) log rho - n / (2 rho)`
/// plus a constant. Maximal at `rho = 1`.
pub fn chi2_summary_loglik(rho: f64, n: usize, s2x: f64) -> Result<f64, EquivalenceError> {
    if !(rho > 0.0) || !(s2x > 0.0) {
        return Err(EquivalenceError::InvalidConfig(format!(
            "log likelihood needs rho > 0 and s2x > 0, got {rho}, {s2x}"
        )));
    }
    let nf = n as f64;
    let sigma2 = rho * s2x / nf;
    Ok(-0.5 * nf * (2.0 * std::f64::consts::PI * sigma2).ln() - s2x / (2.0 * sigma2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::RngStream;
    use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

    fn region(n: usize, m: usize, lo: f64, hi: f64) -> CriticalRegion {
        chi2_critical_region(n, m, 0.01, &ToleranceRegion::new(lo, hi, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn stat_of_identical_and_doubled_sets() {
        let x = SummarySet::new(vec![0.3, -1.2, 2.0, 0.1, -0.4]);
        assert!((chi2_stat(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let y = SummarySet::new(x.values.iter().map(|v| 2.0 * v).collect());
        assert!((chi2_stat(&y, &x).unwrap() - 4.0).abs() < 1e-14);
        let flat = SummarySet::new(vec![1.0; 5]);
        assert!(chi2_stat(&x, &flat).is_err());
    }

    #[test]
    fn region_meets_both_size_constraints() {
        // statrs as an independent CDF oracle
        for (n, m, lo, hi) in [(60, 60, 0.35, 1.65), (60, 108, 0.589, 1.752), (20, 45, 0.5, 3.0)] {
            let r = region(n, m, lo, hi);
            let chi = ChiSquared::new((m - 1) as f64).unwrap();
            for tau in [lo, hi] {
                let size = chi.cdf(n as f64 * r.c_plus / tau) - chi.cdf(n as f64 * r.c_minus / tau);
                assert!((size - 0.01).abs() < 1e-8, "n={n} m={m} tau={tau} size={size}");
            }
        }
    }

    #[test]
    fn power_equals_alpha_at_the_boundaries() {
        let r = region(60, 60, 0.477, 2.2);
        for tau in [0.477, 2.2] {
            assert!((chi2_power(tau, &r, 60, 60).unwrap() - 0.01).abs() < 1e-10);
        }
        assert!(chi2_power(0.0, &r, 60, 60).is_err());
    }

    #[test]
    fn scaled_statistic_is_chi_square() {
        // (n / rho) T over simulated sets should follow χ²(m - 1)
        let (n, m, rho) = (30usize, 25usize, 1.7f64);
        let obs_ss = 30.0;
        let mut rng = RngStream::new(11, 0);
        let reps = 20_000;
        let mut draws: Vec<f64> = (0..reps)
            .map(|_| {
                let y = SummarySet::new((0..m).map(|_| rng.normal(0.0, rho.sqrt())).collect());
                n as f64 / rho * chi2_stat_from_parts(&y, obs_ss).unwrap()
            })
            .collect();
        draws.sort_by(f64::total_cmp);
        let chi = ChiSquared::new((m - 1) as f64).unwrap();
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = chi.cdf(x);
                (f - i as f64 / reps as f64).abs().max((f - (i + 1) as f64 / reps as f64).abs())
            })
            .fold(0.0, f64::max);
        // 0.1% critical value of the KS statistic
        assert!(ks < 1.95 / (reps as f64).sqrt(), "ks = {ks}");
    }

    #[test]
    fn loglik_is_a_change_of_variables_of_the_chi_square_density() {
        // S²/σ² ~ χ²(n) for a known zero mean; as a function of rho the
        // density of S² is pdf(n / rho) / (rho s2x / n)
        let (n, s2x) = (60usize, 60.0f64);
        let chi = ChiSquared::new(n as f64).unwrap();
        let grid = [0.4, 0.8, 1.0, 1.3, 2.5];
        let oracle: Vec<f64> = grid
            .iter()
            .map(|&rho| (chi.pdf(n as f64 / rho) / (rho * s2x / n as f64)).ln())
            .collect();
        let ours: Vec<f64> = grid.iter().map(|&rho| chi2_summary_loglik(rho, n, s2x).unwrap()).collect();
        let offset = oracle[0] - ours[0];
        for (o, u) in oracle.iter().zip(&ours) {
            assert!((o - u - offset).abs() < 1e-9);
        }
        let at_one = chi2_summary_loglik(1.0, n, s2x).unwrap();
        assert!(at_one > chi2_summary_loglik(0.99, n, s2x).unwrap());
        assert!(at_one > chi2_summary_loglik(1.01, n, s2x).unwrap());
    }
}
