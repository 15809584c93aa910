//! Numerical building blocks shared by every other module.

pub mod quad;
pub mod rng;
pub mod roots;
pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use quad::integrate;
pub use rng::RngStream;
pub use roots::{find_root, golden_section_max, grid_then_golden_max};
pub use special::{
    chi2_cdf, chi2_interval, chi2_isf, chi2_pdf, chi2_quantile, chi2_sf, normal_cdf, normal_interval,
    normal_pdf, normal_quantile, normal_sf, student_t_cdf, student_t_cdf_central,
    student_t_quantile,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("root not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("did not converge: {0}")]
    NonConvergence(String),
}

/// Closed interval `[lo, hi]` with `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, NumericError> {
        if lo <= hi {
            Ok(Self { lo, hi })
        } else {
            Err(NumericError::Domain(format!("interval needs lo <= hi, got [{lo}, {hi}]")))
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// `n` equally spaced points from `lo` to `hi` inclusive.
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        linspace(self.lo, self.hi, n)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `n` log-spaced points from `lo` to `hi`, both positive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}
