//! Univariate equivalence tests and their composite intersection.
//!
//! Every test is expressed in "z-space": a scalar statistic `z` built from the
//! simulated summary set and the observed reference, accepted (null of
//! non-equivalence rejected) iff `c_minus <= z <= c_plus`.
//!
//! | kind | z | rho |
//! |------|---|-----|
//! | χ² dispersion | `S²(y) / S²(x)` | `σ² / σ̂²_x` |
//! | TOST location | `ȳ - μ̂_x` | `μ - μ̂_x` |
//! | TOSZ correlation | `atanh(r_y) - atanh(r_x)` | `atanh(ν) - atanh(ν̂_x)` |

pub mod chisq;
pub mod composite;
pub mod summary;
pub mod tost;
pub mod tosz;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::NumericError;

pub use chisq::{chi2_critical_region, chi2_power, chi2_stat, chi2_summary_loglik};
pub use composite::{composite_accept, composite_power};
pub use summary::{PairSet, Summary, SummarySet};
pub use tost::{
    tost_critical_region, tost_power, tost_power_exact, tost_stat, tost_summary_loglik,
};
pub use tosz::{
    fisher_z, tosz_critical_region, tosz_power, tosz_power_region, tosz_stat, tosz_summary_loglik,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquivalenceError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid test configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("no critical region: {0}")]
    NoSolution(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    ChiSqDispersion,
    TostLocation,
    ToszCorrelation,
}

impl TestKind {
    /// Point of equality in rho-space.
    pub fn rho_star(self) -> f64 {
        match self {
            TestKind::ChiSqDispersion => 1.0,
            TestKind::TostLocation | TestKind::ToszCorrelation => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TestKind::ChiSqDispersion => "chisq-dispersion",
            TestKind::TostLocation => "tost-location",
            TestKind::ToszCorrelation => "tosz-correlation",
        }
    }
}

/// Equivalence region `[tau_minus, tau_plus]` around `rho_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceRegion {
    pub tau_minus: f64,
    pub tau_plus: f64,
    pub rho_star: f64,
}

impl ToleranceRegion {
    pub fn new(tau_minus: f64, tau_plus: f64, rho_star: f64) -> Result<Self, EquivalenceError> {
        if tau_minus <= rho_star && rho_star <= tau_plus {
            Ok(Self { tau_minus, tau_plus, rho_star })
        } else {
            Err(EquivalenceError::InvalidConfig(format!(
                "tolerances [{tau_minus}, {tau_plus}] must contain {rho_star}"
            )))
        }
    }

    /// Tolerances `rho_star -/+ half_width`.
    pub fn symmetric(rho_star: f64, half_width: f64) -> Result<Self, EquivalenceError> {
        Self::new(rho_star - half_width, rho_star + half_width, rho_star)
    }
}

/// Acceptance interval `[c_minus, c_plus]` on the z-space statistic.
///
/// For the Fisher-z and t tests a tolerance region that is too narrow for the
/// sample size yields `c_minus >= c_plus`; such a region is empty and accepts
/// nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegion {
    pub c_minus: f64,
    pub c_plus: f64,
    pub alpha: f64,
}

impl CriticalRegion {
    pub fn contains(&self, z: f64) -> bool {
        self.c_minus <= z && z <= self.c_plus
    }

    pub fn is_empty(&self) -> bool {
        !(self.c_minus < self.c_plus)
    }
}

/// Auxiliary statistics a test conditions on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Aux {
    /// Simulated-data standard deviation used by the TOST power and region.
    pub sigma_hat: Option<f64>,
}

/// A univariate test before its critical region is solved.
///
/// `n` is the observed count and `m` the simulated count. For the Fisher-z
/// test both count pairs (after any thinning).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub kind: TestKind,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub tolerance: ToleranceRegion,
    #[serde(default)]
    pub aux: Aux,
}

impl TestConfig {
    pub fn validate(&self) -> Result<(), EquivalenceError> {
        let bad = |msg: String| Err(EquivalenceError::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha must lie in (0, 0.5), got {}", self.alpha));
        }
        if self.n < 2 || self.m < 2 {
            return bad(format!("counts must be >= 2, got n = {}, m = {}", self.n, self.m));
        }
        let t = &self.tolerance;
        if !(t.tau_minus <= t.rho_star && t.rho_star <= t.tau_plus) {
            return bad(format!("tolerances [{}, {}] exclude rho*", t.tau_minus, t.tau_plus));
        }
        match self.kind {
            TestKind::ChiSqDispersion => {
                if !(t.tau_minus > 0.0) {
                    return bad(format!("variance ratio tolerance must be > 0, got {}", t.tau_minus));
                }
            }
            TestKind::TostLocation => match self.aux.sigma_hat {
                Some(s) if s > 0.0 && s.is_finite() => {}
                other => return bad(format!("TOST needs a positive sigma_hat, got {other:?}")),
            },
            TestKind::ToszCorrelation => {
                if self.m < 4 || self.n < 4 {
                    return bad(format!("Fisher-z test needs >= 4 pairs, got n = {}, m = {}", self.n, self.m));
                }
            }
        }
        Ok(())
    }

    pub fn with_tolerance(mut self, tolerance: ToleranceRegion) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    /// Solve the critical region for the current tolerances.
    pub fn critical_region(&self) -> Result<CriticalRegion, EquivalenceError> {
        self.validate()?;
        match self.kind {
            TestKind::ChiSqDispersion => {
                chi2_critical_region(self.n, self.m, self.alpha, &self.tolerance)
            }
            TestKind::TostLocation => Ok(tost_critical_region(
                self.m,
                self.aux.sigma_hat.unwrap_or(1.0),
                self.alpha,
                &self.tolerance,
            )?),
            TestKind::ToszCorrelation => Ok(tosz_critical_region(self.m, self.alpha, &self.tolerance)?),
        }
    }

    /// Probability of acceptance at `rho` given a solved region.
    ///
    /// The TOST uses the exact power of the t-based procedure; see
    /// [`tost_power`] for the noncentral-t approximation.
    pub fn power(&self, rho: f64, region: &CriticalRegion) -> Result<f64, EquivalenceError> {
        match self.kind {
            TestKind::ChiSqDispersion => chi2_power(rho, region, self.n, self.m),
            TestKind::TostLocation => tost_power_exact(
                rho,
                &self.tolerance,
                self.m,
                self.aux.sigma_hat.unwrap_or(1.0),
                self.alpha,
            ),
            TestKind::ToszCorrelation => Ok(tosz_power_region(rho, region, self.m)),
        }
    }

    /// Log summary likelihood at `rho` up to an additive constant.
    pub fn summary_loglik(&self, rho: f64, obs: &ObservedStats) -> Result<f64, EquivalenceError> {
        match self.kind {
            TestKind::ChiSqDispersion => chi2_summary_loglik(rho, self.n, obs.sum_of_squares),
            TestKind::TostLocation => Ok(tost_summary_loglik(rho, self.n, obs.sd)),
            TestKind::ToszCorrelation => Ok(tosz_summary_loglik(rho, self.n)),
        }
    }
}

/// Statistics of the observed summary set a test compares against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedStats {
    pub count: usize,
    /// Centered sum of squares `S²(x)`.
    pub sum_of_squares: f64,
    pub mean: f64,
    /// Standard deviation with divisor `count - 1`.
    pub sd: f64,
    /// Fisher z of the pair correlation (pair sets only).
    pub fisher_z: f64,
}

impl ObservedStats {
    pub fn from_summary(summary: &Summary) -> Result<Self, EquivalenceError> {
        match summary {
            Summary::Values(s) => {
                if s.count() < 2 {
                    return Err(EquivalenceError::Degenerate("observed set has fewer than 2 values".into()));
                }
                Ok(Self {
                    count: s.count(),
                    sum_of_squares: s.sum_of_squares(),
                    mean: s.mean(),
                    sd: s.sd(),
                    fisher_z: f64::NAN,
                })
            }
            Summary::Pairs(p) => Ok(Self {
                count: p.count(),
                sum_of_squares: f64::NAN,
                mean: f64::NAN,
                sd: f64::NAN,
                fisher_z: fisher_z(p.pearson())?,
            }),
        }
    }

    /// Observed statistics of a normal sample with the given size and centered
    /// sum of squares (mean zero).
    pub fn from_sum_of_squares(count: usize, sum_of_squares: f64) -> Self {
        Self {
            count,
            sum_of_squares,
            mean: 0.0,
            sd: (sum_of_squares / (count as f64 - 1.0)).sqrt(),
            fisher_z: f64::NAN,
        }
    }

    /// Observed statistics for a correlation test with the given pair count
    /// and Fisher z.
    pub fn from_fisher_z(count: usize, fisher_z: f64) -> Self {
        Self { count, sum_of_squares: f64::NAN, mean: f64::NAN, sd: f64::NAN, fisher_z }
    }
}

/// How the TOST tolerances follow the simulated standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TostAdaptation {
    /// Tolerances stay as calibrated.
    #[default]
    Fixed,
    /// Tolerances are rescaled by `sigma_y / sigma_ref` each draw. The TOST
    /// power depends on `(rho, tau)` only through their ratio to sigma, so
    /// this equals recalibrating against the drawn `sigma_y` at fixed `m`.
    ScaleWithSd,
}

/// Result of testing one simulated summary set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub z: f64,
    pub accepted: bool,
}

/// A test with its critical region solved, bound to observed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceTest {
    pub config: TestConfig,
    pub region: CriticalRegion,
    pub observed: ObservedStats,
    #[serde(default)]
    pub tost_adaptation: TostAdaptation,
}

impl EquivalenceTest {
    pub fn new(config: TestConfig, observed: ObservedStats) -> Result<Self, EquivalenceError> {
        let region = config.critical_region()?;
        Ok(Self { config, region, observed, tost_adaptation: TostAdaptation::Fixed })
    }

    /// Replace tolerances and re-solve the critical region.
    pub fn retune(&mut self, tolerance: ToleranceRegion) -> Result<(), EquivalenceError> {
        self.config.tolerance = tolerance;
        self.region = self.config.critical_region()?;
        Ok(())
    }

    pub fn power(&self, rho: f64) -> Result<f64, EquivalenceError> {
        self.config.power(rho, &self.region)
    }

    /// The z-space statistic of a simulated summary set.
    pub fn statistic(&self, sim: &Summary) -> Result<f64, EquivalenceError> {
        match (self.config.kind, sim) {
            (TestKind::ChiSqDispersion, Summary::Values(s)) => {
                chisq::chi2_stat_from_parts(s, self.observed.sum_of_squares)
            }
            (TestKind::TostLocation, Summary::Values(s)) => Ok(s.mean() - self.observed.mean),
            (TestKind::ToszCorrelation, Summary::Pairs(p)) => {
                Ok(fisher_z(p.pearson())? - self.observed.fisher_z)
            }
            (kind, _) => Err(EquivalenceError::InvalidConfig(format!(
                "summary type does not match test {}",
                kind.name()
            ))),
        }
    }

    /// Acceptance region that applies to this particular simulated set.
    pub fn region_for(&self, sim: &Summary) -> Result<CriticalRegion, EquivalenceError> {
        match (self.config.kind, sim) {
            (TestKind::TostLocation, Summary::Values(s)) => {
                let sd = s.sd();
                if !(sd > 0.0) {
                    return Err(EquivalenceError::Degenerate("simulated sd is zero".into()));
                }
                let mut tol = self.config.tolerance;
                if self.tost_adaptation == TostAdaptation::ScaleWithSd {
                    let scale = sd / self.config.aux.sigma_hat.unwrap_or(sd);
                    tol.tau_minus = tol.rho_star + (tol.tau_minus - tol.rho_star) * scale;
                    tol.tau_plus = tol.rho_star + (tol.tau_plus - tol.rho_star) * scale;
                }
                tost_critical_region(s.count(), sd, self.config.alpha, &tol)
            }
            _ => Ok(self.region),
        }
    }

    /// Accept or reject one simulated set. Degenerate data rejects with a NaN
    /// statistic instead of failing.
    pub fn decide(&self, sim: &Summary) -> Decision {
        let attempt = || -> Result<Decision, EquivalenceError> {
            let z = self.statistic(sim)?;
            let region = self.region_for(sim)?;
            Ok(Decision { z, accepted: z.is_finite() && region.contains(z) })
        };
        attempt().unwrap_or(Decision { z: f64::NAN, accepted: false })
    }
}
