//! Generative models with summary extraction, link functions and exact
//! posterior oracles.

pub mod ma1;
pub mod normal;

use thiserror::Error;

use crate::equivalence::Summary;
use crate::numeric::special::{gamma_pq, ln_gamma};
use crate::numeric::{Interval, NumericError, RngStream};

pub use ma1::{Ma1Model, Ma1Posterior, Ma1Prior, SubsetScheme};
pub use normal::{NormalPosterior, NormalVarianceModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter outside the model domain: {0}")]
    Domain(String),
    #[error("series too short: need {need}, got {got}")]
    Length { need: usize, got: usize },
    #[error("summary count mismatch: model has {expected} summary sets, got {got} counts")]
    Counts { expected: usize, got: usize },
}

/// A generative model as seen by the samplers.
///
/// Summary sets are produced in a fixed order; the `k`-th calibrated test
/// consumes the `k`-th set.
pub trait Model: Sync {
    /// Parameter names in the order used by every `theta` slice.
    fn param_names(&self) -> Vec<&'static str>;

    fn dim(&self) -> usize {
        self.param_names().len()
    }

    /// Number of summary sets `K`.
    fn summary_count(&self) -> usize;

    fn prior_sample(&self, rng: &mut RngStream) -> Vec<f64>;

    fn prior_density(&self, theta: &[f64]) -> f64;

    /// Bounding box of the prior support, one interval per parameter.
    fn prior_bounds(&self) -> Vec<Interval>;

    /// Raw simulated data of the given length.
    fn simulate(&self, theta: &[f64], size: usize, rng: &mut RngStream) -> Result<Vec<f64>, ModelError>;

    /// Raw data length needed so that set `k` holds at least `counts[k]` values.
    fn required_sim_size(&self, counts: &[usize]) -> Result<usize, ModelError>;

    /// Summary sets with exactly `counts[k]` entries each.
    fn extract_summaries(&self, raw: &[f64], counts: &[usize]) -> Result<Vec<Summary>, ModelError>;

    /// The observed raw data.
    fn observed_data(&self) -> &[f64];

    /// Summary sets of the observed data at their natural sizes.
    fn observed_summaries(&self) -> Vec<Summary>;

    /// Scalar summary statistics for the standard ABC baseline.
    fn summary_statistics(&self, raw: &[f64]) -> Vec<f64>;

    /// The link `theta -> rho`, when known.
    fn link(&self, theta: &[f64]) -> Option<Vec<f64>>;

    /// `|det dL/dtheta|`, when known.
    fn jacobian_det(&self, theta: &[f64]) -> Option<f64>;
}

/// An exact posterior used as the reference in accuracy diagnostics.
pub trait ExactPosterior: Sync {
    /// Bounding box of the posterior support.
    fn bounds(&self) -> Vec<Interval>;

    fn density(&self, theta: &[f64]) -> f64;

    /// Posterior probability of the box `[lo, hi]`.
    fn box_mass(&self, lo: &[f64], hi: &[f64]) -> Result<f64, NumericError>;

    fn map(&self) -> Vec<f64>;
}

/// `ln ∫_lo^hi s^(-n/2) exp(-q / (2s)) ds` through the incomplete gamma
/// function with shape `n/2 - 1`.
pub(crate) fn log_variance_kernel_integral(n: usize, q: f64, lo: f64, hi: f64) -> Result<f64, NumericError> {
    if !(hi > lo) {
        return Ok(f64::NEG_INFINITY);
    }
    let k = 0.5 * n as f64 - 1.0;
    let x_hi = if lo > 0.0 { q / (2.0 * lo) } else { f64::INFINITY };
    let x_lo = q / (2.0 * hi);
    let (p_hi, q_hi) = gamma_pq(k, x_hi)?;
    let (p_lo, q_lo) = gamma_pq(k, x_lo)?;
    let diff = if x_lo >= k { q_lo - q_hi } else { p_hi - p_lo };
    Ok(-k * (0.5 * q).ln() + ln_gamma(k) + diff.max(0.0).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::integrate;

    #[test]
    fn variance_kernel_integral_matches_quadrature() {
        for (n, q, lo, hi) in [(60, 60.0, 0.2, 4.0), (150, 140.0, 0.9, 1.1), (10, 3.0, 0.01, 0.05)] {
            let peak = -0.5 * n as f64 * (q / n as f64).ln() - 0.5 * n as f64;
            let quad = integrate(
                |s: f64| (-0.5 * n as f64 * s.ln() - q / (2.0 * s) - peak).exp(),
                lo,
                hi,
                1e-14,
            )
            .unwrap();
            let closed = log_variance_kernel_integral(n, q, lo, hi).unwrap() - peak;
            assert!((closed - quad.ln()).abs() < 1e-8, "{closed} vs {}", quad.ln());
        }
    }
}
