//! Normal data with known zero mean and unknown variance.

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{log_variance_kernel_integral, ExactPosterior, Model, ModelError};
use crate::equivalence::{Summary, SummarySet};
use crate::numeric::{integrate, Interval, NumericError, RngStream};

/// `x_i ~ N(0, σ²)` with a uniform prior on `σ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalVarianceModel {
    pub prior_support: Interval,
    pub observed: Vec<f64>,
}

impl NormalVarianceModel {
    pub fn new(observed: Vec<f64>, prior_support: Interval) -> Result<Self, ModelError> {
        if observed.len() < 2 {
            return Err(ModelError::Length { need: 2, got: observed.len() });
        }
        if !(prior_support.lo > 0.0) {
            return Err(ModelError::Domain(format!("prior support must be positive, got {prior_support:?}")));
        }
        let model = Self { prior_support, observed };
        if !(model.sum_of_squares() > 0.0) {
            return Err(ModelError::Domain("observed data has zero sum of squares".into()));
        }
        Ok(model)
    }

    /// Pseudo data of size `n` whose mean is exactly 0 and whose `S²(x)/n` is
    /// exactly `sigma2_hat`.
    pub fn pseudo_data(n: usize, sigma2_hat: f64, rng: &mut RngStream) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.std_normal()).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let centred: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let ss: f64 = centred.iter().map(|v| v * v).sum();
        let scale = (sigma2_hat * n as f64 / ss).sqrt();
        centred.into_iter().map(|v| v * scale).collect()
    }

    pub fn n(&self) -> usize {
        self.observed.len()
    }

    /// `S²(x) = sum x_i²` (the mean is known to be zero).
    pub fn sum_of_squares(&self) -> f64 {
        self.observed.iter().map(|v| v * v).sum()
    }

    /// `σ̂²_x = S²(x) / n`.
    pub fn sigma2_hat(&self) -> f64 {
        self.sum_of_squares() / self.n() as f64
    }

    pub fn exact_posterior(&self) -> Result<NormalPosterior, NumericError> {
        NormalPosterior::new(self.n(), self.sum_of_squares(), self.prior_support)
    }
}

/// `m` iid draws from `N(0, sigma2)`.
pub fn normal_simulate(sigma2: f64, m: usize, rng: &mut RngStream) -> Result<SummarySet, ModelError> {
    if !(sigma2 > 0.0) {
        return Err(ModelError::Domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    let sd = sigma2.sqrt();
    Ok(SummarySet::new((0..m).map(|_| sd * rng.std_normal()).collect()))
}

impl Model for NormalVarianceModel {
    fn param_names(&self) -> Vec<&'static str> {
        vec!["sigma2"]
    }

    fn summary_count(&self) -> usize {
        1
    }

    fn prior_sample(&self, rng: &mut RngStream) -> Vec<f64> {
        vec![rng.uniform_in(self.prior_support.lo, self.prior_support.hi)]
    }

    fn prior_density(&self, theta: &[f64]) -> f64 {
        if self.prior_support.contains(theta[0]) {
            1.0 / self.prior_support.width()
        } else {
            0.0
        }
    }

    fn prior_bounds(&self) -> Vec<Interval> {
        vec![self.prior_support]
    }

    fn simulate(&self, theta: &[f64], size: usize, rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
        normal_simulate(theta[0], size, rng).map(|s| s.values)
    }

    fn required_sim_size(&self, counts: &[usize]) -> Result<usize, ModelError> {
        match counts {
            [m] => Ok(*m),
            _ => Err(ModelError::Counts { expected: 1, got: counts.len() }),
        }
    }

    fn extract_summaries(&self, raw: &[f64], counts: &[usize]) -> Result<Vec<Summary>, ModelError> {
        let m = self.required_sim_size(counts)?;
        if raw.len() < m {
            return Err(ModelError::Length { need: m, got: raw.len() });
        }
        Ok(vec![Summary::Values(SummarySet::new(raw[..m].to_vec()))])
    }

    fn observed_data(&self) -> &[f64] {
        &self.observed
    }

    fn observed_summaries(&self) -> Vec<Summary> {
        vec![Summary::Values(SummarySet::new(self.observed.clone()))]
    }

    fn summary_statistics(&self, raw: &[f64]) -> Vec<f64> {
        vec![SummarySet::new(raw.to_vec()).sd().powi(2)]
    }

    fn link(&self, theta: &[f64]) -> Option<Vec<f64>> {
        Some(vec![theta[0] / self.sigma2_hat()])
    }

    fn jacobian_det(&self, _theta: &[f64]) -> Option<f64> {
        Some(1.0 / self.sigma2_hat())
    }
}

/// Exact posterior `∝ (σ²)^(-n/2) exp(-S² / (2σ²))` on the prior support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalPosterior {
    pub n: usize,
    pub sum_of_squares: f64,
    pub support: Interval,
    log_norm: f64,
    log_peak: f64,
}

impl NormalPosterior {
    pub fn new(n: usize, sum_of_squares: f64, support: Interval) -> Result<Self, NumericError> {
        let mut post = Self { n, sum_of_squares, support, log_norm: 0.0, log_peak: 0.0 };
        post.log_peak = post.log_unnormalized(post.map());
        let mass = integrate(|s| (post.log_unnormalized(s) - post.log_peak).exp(), support.lo, support.hi, 1e-12)?;
        post.log_norm = post.log_peak + mass.ln();
        Ok(post)
    }

    fn log_unnormalized(&self, sigma2: f64) -> f64 {
        -0.5 * self.n as f64 * sigma2.ln() - self.sum_of_squares / (2.0 * sigma2)
    }

    pub fn density(&self, sigma2: f64) -> f64 {
        if self.support.contains(sigma2) {
            (self.log_unnormalized(sigma2) - self.log_norm).exp()
        } else {
            0.0
        }
    }

    /// `S²/n` clamped to the support.
    pub fn map(&self) -> f64 {
        (self.sum_of_squares / self.n as f64).clamp(self.support.lo, self.support.hi)
    }

    /// Exact draw: `σ²` is inverse gamma with shape `n/2 - 1` and scale
    /// `S²/2`, truncated to the support by rejection.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let gamma = Gamma::new(0.5 * self.n as f64 - 1.0, 2.0 / self.sum_of_squares)
            .expect("shape and scale are positive for n > 2");
        loop {
            let s = 1.0 / gamma.sample(rng);
            if self.support.contains(s) {
                return s;
            }
        }
    }
}

impl ExactPosterior for NormalPosterior {
    fn bounds(&self) -> Vec<Interval> {
        vec![self.support]
    }

    fn density(&self, theta: &[f64]) -> f64 {
        NormalPosterior::density(self, theta[0])
    }

    fn box_mass(&self, lo: &[f64], hi: &[f64]) -> Result<f64, NumericError> {
        let (a, b) = (lo[0].max(self.support.lo), hi[0].min(self.support.hi));
        Ok((log_variance_kernel_integral(self.n, self.sum_of_squares, a, b)? - self.log_norm).exp())
    }

    fn map(&self) -> Vec<f64> {
        vec![NormalPosterior::map(self)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> NormalVarianceModel {
        let mut rng = RngStream::new(1, 0);
        let x = NormalVarianceModel::pseudo_data(60, 1.0, &mut rng);
        NormalVarianceModel::new(x, Interval::new(0.2, 4.0).unwrap()).unwrap()
    }

    #[test]
    fn pseudo_data_hits_the_target_exactly() {
        let m = model();
        assert!((m.sigma2_hat() - 1.0).abs() < 1e-12);
        assert!(m.observed.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn simulated_variance_converges() {
        let mut rng = RngStream::new(2, 0);
        for sigma2 in [1.0, 4.0] {
            let s = normal_simulate(sigma2, 1_000_000, &mut rng).unwrap();
            assert!((s.sd().powi(2) / sigma2 - 1.0).abs() < 0.01);
        }
        assert!(normal_simulate(-1.0, 3, &mut rng).is_err());
    }

    #[test]
    fn posterior_is_normalized_with_the_analytic_map() {
        let p = model().exact_posterior().unwrap();
        assert!((p.map() - 1.0).abs() < 1e-12);
        let mass = integrate(|s| p.density(s), 0.2, 4.0, 1e-10).unwrap();
        assert!((mass - 1.0).abs() < 1e-8);
        let grid = Interval::new(0.2, 4.0).unwrap().linspace(38_001);
        let arg = grid.iter().copied().max_by(|a, b| p.density(*a).total_cmp(&p.density(*b))).unwrap();
        assert!((arg - 1.0).abs() < 1e-4);
    }

    #[test]
    fn exact_sampler_matches_the_density() {
        let p = model().exact_posterior().unwrap();
        let mut rng = RngStream::new(3, 0);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| p.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let exact = integrate(|s| s * p.density(s), 0.2, 4.0, 1e-12).unwrap();
        let var = integrate(|s| (s - exact).powi(2) * p.density(s), 0.2, 4.0, 1e-12).unwrap();
        assert!((mean - exact).abs() < 4.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn box_mass_matches_the_density() {
        let p = model().exact_posterior().unwrap();
        let exact = integrate(|s| p.density(s), 0.9, 1.3, 1e-13).unwrap();
        let boxed = ExactPosterior::box_mass(&p, &[0.9], &[1.3]).unwrap();
        assert!((exact - boxed).abs() < 1e-10);
        assert!((ExactPosterior::box_mass(&p, &[0.0], &[10.0]).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn link_maps_the_observed_scale_to_one() {
        let m = model();
        assert!((m.link(&[1.0]).unwrap()[0] - 1.0).abs() < 1e-12);
        assert_eq!(m.prior_density(&[5.0]), 0.0);
    }
}
