//! Gaussian random-walk proposals truncated to a box.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SamplerError;
use crate::numeric::{integrate, normal_interval, normal_pdf, Interval, RngStream};

const MAX_REDRAWS: usize = 100_000;

/// Gaussian random walk with covariance `covariance`, restricted to the box
/// `truncation`.
///
/// The truncated kernel is `q(θ → θ') = N(θ'; θ, Σ) / Z(θ)` with `Z(θ)` the
/// Gaussian mass of the box around `θ`, so the Hastings ratio is
/// `Z(θ) / Z(θ')`. `Z` is computed exactly in one dimension, by quadrature
/// over the conditional normal in two, and as a product for diagonal
/// covariances of any size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub covariance: Vec<Vec<f64>>,
    pub truncation: Vec<Interval>,
    #[serde(skip)]
    chol: Option<DMatrix<f64>>,
}

impl ProposalSpec {
    pub fn new(covariance: Vec<Vec<f64>>, truncation: Vec<Interval>) -> Result<Self, SamplerError> {
        let d = covariance.len();
        if d == 0 || covariance.iter().any(|r| r.len() != d) || truncation.len() != d {
            return Err(SamplerError::Proposal(format!(
                "covariance must be square and match {} truncation intervals",
                truncation.len()
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[i][j] - covariance[j][i]).abs() > 1e-14 * covariance[i][i].abs().max(1.0) {
                    return Err(SamplerError::Proposal("covariance is not symmetric".into()));
                }
            }
        }
        let m = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
        let chol = m
            .cholesky()
            .ok_or_else(|| SamplerError::Proposal("covariance is not positive definite".into()))?;
        Ok(Self { covariance, truncation, chol: Some(chol.l()) })
    }

    /// Untruncated proposal (the box is all of `R^d`).
    pub fn unbounded(covariance: Vec<Vec<f64>>) -> Result<Self, SamplerError> {
        let d = covariance.len();
        Self::new(covariance, vec![Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY }; d])
    }

    pub fn dim(&self) -> usize {
        self.covariance.len()
    }

    /// Same box, covariance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, SamplerError> {
        let cov = self
            .covariance
            .iter()
            .map(|r| r.iter().map(|v| v * factor).collect())
            .collect();
        Self::new(cov, self.truncation.clone())
    }

    fn cholesky(&self) -> DMatrix<f64> {
        match &self.chol {
            Some(l) => l.clone(),
            None => {
                let d = self.dim();
                DMatrix::from_fn(d, d, |i, j| self.covariance[i][j])
                    .cholesky()
                    .expect("validated at construction")
                    .l()
            }
        }
    }

    pub fn in_box(&self, theta: &[f64]) -> bool {
        theta.iter().zip(&self.truncation).all(|(v, b)| b.contains(*v))
    }

    /// Draw from the truncated kernel centred at `from`.
    pub fn sample(&self, from: &[f64], rng: &mut RngStream) -> Result<Vec<f64>, SamplerError> {
        let l = self.cholesky();
        let d = self.dim();
        for _ in 0..MAX_REDRAWS {
            let z = DVector::from_fn(d, |_, _| rng.std_normal());
            let step = &l * z;
            let cand: Vec<f64> = from.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if self.in_box(&cand) {
                return Ok(cand);
            }
        }
        Err(SamplerError::Proposal(format!(
            "no in-box proposal from {from:?} after {MAX_REDRAWS} draws"
        )))
    }

    fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.covariance[i][j] == 0.0))
    }

    /// `Z(θ)`: Gaussian mass of the box for a kernel centred at `theta`.
    pub fn truncation_mass(&self, theta: &[f64]) -> Result<f64, SamplerError> {
        let c = &self.covariance;
        let t = &self.truncation;
        let marginal = |i: usize| -> f64 {
            let s = c[i][i].sqrt();
            normal_interval((t[i].lo - theta[i]) / s, (t[i].hi - theta[i]) / s)
        };
        if self.is_diagonal() {
            return Ok((0..self.dim()).map(marginal).product());
        }
        if self.dim() != 2 {
            return Err(SamplerError::Proposal(
                "truncation mass needs a diagonal covariance beyond two dimensions".into(),
            ));
        }
        let s1 = c[0][0].sqrt();
        let slope = c[0][1] / c[0][0];
        let s_cond = (c[1][1] - c[0][1] * c[0][1] / c[0][0]).sqrt();
        let lo = t[0].lo.max(theta[0] - 12.0 * s1);
        let hi = t[0].hi.min(theta[0] + 12.0 * s1);
        if !(hi > lo) {
            return Ok(0.0);
        }
        let inner = |x: f64| -> f64 {
            let mean = theta[1] + slope * (x - theta[0]);
            normal_pdf((x - theta[0]) / s1) / s1
                * normal_interval((t[1].lo - mean) / s_cond, (t[1].hi - mean) / s_cond)
        };
        Ok(integrate(inner, lo, hi, 1e-13)?)
    }

    /// `ln q(θ' → θ) - ln q(θ → θ') = ln Z(θ) - ln Z(θ')`.
    pub fn log_hastings_ratio(&self, theta: &[f64], proposed: &[f64]) -> Result<f64, SamplerError> {
        Ok(self.truncation_mass(theta)?.ln() - self.truncation_mass(proposed)?.ln())
    }
}
