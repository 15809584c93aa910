//! First-order moving average `x_t = u_t + a u_{t-1}`, `u_t ~ N(0, σ²)`.

use serde::{Deserialize, Serialize};

use super::{log_variance_kernel_integral, ExactPosterior, Model, ModelError};
use crate::equivalence::{PairSet, Summary, SummarySet};
use crate::numeric::{grid_then_golden_max, integrate, Interval, NumericError, RngStream};
use crate::samplers::{metropolis_hastings, run_streams, Chain, ProposalSpec, SamplerError};

const ATANH_GUARD: f64 = 1.0 - 1e-12;

fn guarded_atanh(x: f64) -> f64 {
    x.clamp(-ATANH_GUARD, ATANH_GUARD).atanh()
}

/// Length-`n` series with a stationary start `u_0 ~ N(0, σ²)`.
pub fn ma1_simulate(a: f64, sigma2: f64, n: usize, rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
    if !(sigma2 > 0.0) || !a.is_finite() {
        return Err(ModelError::Domain(format!("need sigma2 > 0 and finite a, got a = {a}, sigma2 = {sigma2}")));
    }
    let sd = sigma2.sqrt();
    let mut prev = sd * rng.std_normal();
    Ok((0..n)
        .map(|_| {
            let u = sd * rng.std_normal();
            let x = u + a * prev;
            prev = u;
            x
        })
        .collect())
}

/// `ν̂₁ = Σ(x - x̄)²/n` and `ν̂₂` = Pearson correlation of consecutive pairs.
pub fn estimate_nu_hat(series: &[f64]) -> Result<(f64, f64), ModelError> {
    if series.len() < 3 {
        return Err(ModelError::Length { need: 3, got: series.len() });
    }
    let s = SummarySet::new(series.to_vec());
    let nu1 = s.sum_of_squares() / series.len() as f64;
    let nu2 = PairSet::from_series(series, 0..series.len() - 1).pearson();
    if !(nu1 > 0.0) || !nu2.is_finite() {
        return Err(ModelError::Domain("series has zero variance".into()));
    }
    Ok((nu1, nu2))
}

fn check_nu_hat(nu_hat: (f64, f64)) -> Result<(), ModelError> {
    if !(nu_hat.0 > 0.0) || !(nu_hat.1.abs() < 1.0) {
        return Err(ModelError::Domain(format!("need nu1 > 0 and |nu2| < 1, got {nu_hat:?}")));
    }
    Ok(())
}

/// `ρ₁ = (1 + a²)σ²/ν̂₁`, `ρ₂ = atanh(a/(1 + a²)) - atanh(ν̂₂)`.
pub fn ma1_link(a: f64, sigma2: f64, nu_hat: (f64, f64)) -> Result<(f64, f64), ModelError> {
    check_nu_hat(nu_hat)?;
    let r1 = (1.0 + a * a) * sigma2 / nu_hat.0;
    let r2 = guarded_atanh(a / (1.0 + a * a)) - guarded_atanh(nu_hat.1);
    Ok((r1, r2))
}

/// Inverse of [`ma1_link`] on the invertible branch `|a| < 1`.
pub fn ma1_inverse_link(rho1: f64, rho2: f64, nu_hat: (f64, f64)) -> Result<(f64, f64), ModelError> {
    check_nu_hat(nu_hat)?;
    let t = (rho2 + guarded_atanh(nu_hat.1)).tanh();
    if t.abs() > 0.5 {
        return Err(ModelError::Domain(format!("lag-1 correlation {t} is not attainable by an MA(1)")));
    }
    let a = if t == 0.0 { 0.0 } else { (1.0 - (1.0 - 4.0 * t * t).sqrt()) / (2.0 * t) };
    Ok((a, rho1 * nu_hat.0 / (1.0 + a * a)))
}

/// `|det ∂L| = (1 - a⁴) / ((1 + a² + a⁴) ν̂₁)`.
pub fn ma1_jacobian_det(a: f64, nu_hat1: f64) -> Result<f64, ModelError> {
    if !(nu_hat1 > 0.0) {
        return Err(ModelError::Domain(format!("nu1 must be positive, got {nu_hat1}")));
    }
    let a2 = a * a;
    Ok(((1.0 - a2 * a2) / ((1.0 + a2 + a2 * a2) * nu_hat1)).abs())
}

/// Rectangle in `ρ` space whose preimage is the induced prior support.
pub fn ma1_rho_bounds(
    a_range: Interval,
    sigma2_range: Interval,
    nu_hat: (f64, f64),
) -> Result<(Interval, Interval), ModelError> {
    check_nu_hat(nu_hat)?;
    if !(a_range.lo < a_range.hi) || a_range.lo < -0.5 || a_range.hi > 0.5 {
        return Err(ModelError::Domain(format!("a range {a_range:?} must be increasing within [-0.5, 0.5]")));
    }
    if !(sigma2_range.lo > 0.0 && sigma2_range.lo < sigma2_range.hi) {
        return Err(ModelError::Domain(format!("sigma2 range {sigma2_range:?} must be positive and increasing")));
    }
    let a_small = if a_range.contains(0.0) { 0.0 } else { a_range.lo.abs().min(a_range.hi.abs()) };
    let a_large = a_range.lo.abs().max(a_range.hi.abs());
    let rho1 = Interval {
        lo: (1.0 + a_small * a_small) * sigma2_range.lo / nu_hat.0,
        hi: (1.0 + a_large * a_large) * sigma2_range.hi / nu_hat.0,
    };
    let rho2 = Interval {
        lo: ma1_link(a_range.lo, 1.0, nu_hat)?.1,
        hi: ma1_link(a_range.hi, 1.0, nu_hat)?.1,
    };
    Ok((rho1, rho2))
}

/// Prior on `(a, σ²)` induced by a uniform prior on the `ρ` rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ma1Prior {
    pub a: Interval,
    pub sigma2: Interval,
    pub nu_hat: (f64, f64),
    pub rho1: Interval,
    pub rho2: Interval,
}

impl Ma1Prior {
    pub fn new(a: Interval, sigma2: Interval, nu_hat: (f64, f64)) -> Result<Self, ModelError> {
        let (rho1, rho2) = ma1_rho_bounds(a, sigma2, nu_hat)?;
        Ok(Self { a, sigma2, nu_hat, rho1, rho2 })
    }

    /// `σ²` range of the support at a given `a`.
    pub fn sigma2_support(&self, a: f64) -> Interval {
        let s = self.nu_hat.0 / (1.0 + a * a);
        Interval { lo: self.rho1.lo * s, hi: self.rho1.hi * s }
    }

    pub fn contains(&self, a: f64, sigma2: f64) -> bool {
        self.a.contains(a) && self.sigma2_support(a).contains(sigma2)
    }

    pub fn density(&self, a: f64, sigma2: f64) -> f64 {
        if !self.contains(a, sigma2) {
            return 0.0;
        }
        ma1_jacobian_det(a, self.nu_hat.0).unwrap_or(0.0) / (self.rho1.width() * self.rho2.width())
    }

    /// Uniform `ρ` mapped back through the inverse link.
    pub fn sample(&self, rng: &mut RngStream) -> [f64; 2] {
        let r1 = rng.uniform_in(self.rho1.lo, self.rho1.hi);
        let r2 = rng.uniform_in(self.rho2.lo, self.rho2.hi);
        let (a, s2) = ma1_inverse_link(r1, r2, self.nu_hat).expect("rho rectangle maps inside |a| <= 0.5");
        [a.clamp(self.a.lo, self.a.hi), s2]
    }

    /// Bounding box of the support.
    pub fn bounding_box(&self) -> Vec<Interval> {
        let a_small = if self.a.contains(0.0) { 0.0 } else { self.a.lo.abs().min(self.a.hi.abs()) };
        let a_large = self.a.lo.abs().max(self.a.hi.abs());
        vec![
            self.a,
            Interval { lo: self.sigma2_support(a_large).lo, hi: self.sigma2_support(a_small).hi },
        ]
    }
}

/// How the series is split into summary sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetScheme {
    /// One variance test on all points and one correlation test on all
    /// consecutive pairs.
    #[default]
    IgnoreAutocorr,
    /// Variance tests on odd and even positions and correlation tests on
    /// pairs starting at positions 0, 1 and 2 modulo 3.
    ThinTwoFive,
}

impl SubsetScheme {
    pub fn summary_count(self) -> usize {
        match self {
            SubsetScheme::IgnoreAutocorr => 2,
            SubsetScheme::ThinTwoFive => 5,
        }
    }

    /// Raw length needed for the given set sizes.
    pub fn required_len(self, counts: &[usize]) -> Result<usize, ModelError> {
        if counts.len() != self.summary_count() {
            return Err(ModelError::Counts { expected: self.summary_count(), got: counts.len() });
        }
        let pairs_need = |c: usize, start: usize| if c == 0 { 0 } else { start + 3 * (c - 1) + 2 };
        Ok(match self {
            SubsetScheme::IgnoreAutocorr => counts[0].max(counts[1] + 1),
            SubsetScheme::ThinTwoFive => (2 * counts[0]).saturating_sub(1)
                .max(2 * counts[1])
                .max(pairs_need(counts[2], 0))
                .max(pairs_need(counts[3], 1))
                .max(pairs_need(counts[4], 2)),
        })
    }

    /// Summary sets with exactly `counts[k]` entries from the head of `raw`.
    pub fn extract(self, raw: &[f64], counts: &[usize]) -> Result<Vec<Summary>, ModelError> {
        let need = self.required_len(counts)?;
        if raw.len() < need {
            return Err(ModelError::Length { need, got: raw.len() });
        }
        let strided = |start: usize, step: usize, count: usize| -> Vec<f64> {
            raw.iter().skip(start).step_by(step).take(count).copied().collect()
        };
        let pairs = |start: usize, count: usize| {
            Summary::Pairs(PairSet::from_series(raw, (0..count).map(|i| start + 3 * i)))
        };
        Ok(match self {
            SubsetScheme::IgnoreAutocorr => vec![
                Summary::Values(SummarySet::new(raw[..counts[0]].to_vec())),
                Summary::Pairs(PairSet::from_series(raw, 0..counts[1])),
            ],
            SubsetScheme::ThinTwoFive => vec![
                Summary::Values(SummarySet::new(strided(0, 2, counts[0]))),
                Summary::Values(SummarySet::new(strided(1, 2, counts[1]))),
                pairs(0, counts[2]),
                pairs(1, counts[3]),
                pairs(2, counts[4]),
            ],
        })
    }

    /// Set sizes a series of length `n` provides. The three stride-3 pair
    /// sets are cut to their common size.
    pub fn natural_counts(self, n: usize) -> Vec<usize> {
        match self {
            SubsetScheme::IgnoreAutocorr => vec![n, n.saturating_sub(1)],
            SubsetScheme::ThinTwoFive => {
                let p = if n >= 4 { (n - 4) / 3 + 1 } else { 0 };
                vec![n.div_ceil(2), n / 2, p, p, p]
            }
        }
    }
}

/// Split a series into summary sets at their natural sizes.
pub fn ma1_subset(series: &[f64], scheme: SubsetScheme) -> Result<Vec<Summary>, ModelError> {
    if series.len() < 10 {
        return Err(ModelError::Length { need: 10, got: series.len() });
    }
    scheme.extract(series, &scheme.natural_counts(series.len()))
}

/// `Σ û_t²` with `û_0 = 0` and `û_t = x_t - a û_{t-1}`.
fn residual_sum_of_squares(a: f64, series: &[f64]) -> f64 {
    let mut u = 0.0;
    series
        .iter()
        .map(|x| {
            u = x - a * u;
            u * u
        })
        .sum()
}

/// Conditional log-likelihood `-n ln σ - Σ û_t² / (2σ²)`.
pub fn ma1_conditional_loglik(a: f64, sigma2: f64, series: &[f64]) -> Result<f64, ModelError> {
    if !(sigma2 > 0.0) {
        return Err(ModelError::Domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    let n = series.len() as f64;
    Ok(-0.5 * n * sigma2.ln() - residual_sum_of_squares(a, series) / (2.0 * sigma2))
}

/// Draw `candidates` series at `(a0, σ0²)` and keep the one whose `ν̂` is
/// closest to the theoretical `((1 + a0²)σ0², a0/(1 + a0²))`.
pub fn ma1_pseudo_data(
    n: usize,
    a0: f64,
    sigma2_0: f64,
    candidates: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>, ModelError> {
    let nu1 = (1.0 + a0 * a0) * sigma2_0;
    let nu2 = a0 / (1.0 + a0 * a0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..candidates.max(1) {
        let x = ma1_simulate(a0, sigma2_0, n, rng)?;
        let (h1, h2) = estimate_nu_hat(&x)?;
        let dist = (h1 / nu1 - 1.0).abs() + (h2 - nu2).abs();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, x));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// MA(1) model bound to an observed series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ma1Model {
    pub series: Vec<f64>,
    pub nu_hat: (f64, f64),
    pub prior: Ma1Prior,
    pub scheme: SubsetScheme,
}

impl Ma1Model {
    pub fn new(series: Vec<f64>, a_range: Interval, sigma2_range: Interval, scheme: SubsetScheme) -> Result<Self, ModelError> {
        if series.len() < 10 {
            return Err(ModelError::Length { need: 10, got: series.len() });
        }
        let nu_hat = estimate_nu_hat(&series)?;
        let prior = Ma1Prior::new(a_range, sigma2_range, nu_hat)?;
        Ok(Self { series, nu_hat, prior, scheme })
    }

    pub fn n(&self) -> usize {
        self.series.len()
    }

    pub fn exact_posterior(&self) -> Result<Ma1Posterior, NumericError> {
        Ma1Posterior::new(self.series.clone(), self.prior)
    }
}

impl Model for Ma1Model {
    fn param_names(&self) -> Vec<&'static str> {
        vec!["a", "sigma2"]
    }

    fn summary_count(&self) -> usize {
        self.scheme.summary_count()
    }

    fn prior_sample(&self, rng: &mut RngStream) -> Vec<f64> {
        self.prior.sample(rng).to_vec()
    }

    fn prior_density(&self, theta: &[f64]) -> f64 {
        self.prior.density(theta[0], theta[1])
    }

    fn prior_bounds(&self) -> Vec<Interval> {
        self.prior.bounding_box()
    }

    fn simulate(&self, theta: &[f64], size: usize, rng: &mut RngStream) -> Result<Vec<f64>, ModelError> {
        ma1_simulate(theta[0], theta[1], size, rng)
    }

    fn required_sim_size(&self, counts: &[usize]) -> Result<usize, ModelError> {
        self.scheme.required_len(counts)
    }

    fn extract_summaries(&self, raw: &[f64], counts: &[usize]) -> Result<Vec<Summary>, ModelError> {
        self.scheme.extract(raw, counts)
    }

    fn observed_data(&self) -> &[f64] {
        &self.series
    }

    fn observed_summaries(&self) -> Vec<Summary> {
        ma1_subset(&self.series, self.scheme).expect("series length checked at construction")
    }

    fn summary_statistics(&self, raw: &[f64]) -> Vec<f64> {
        match estimate_nu_hat(raw) {
            Ok((v, r)) => vec![v, r],
            Err(_) => vec![f64::NAN, f64::NAN],
        }
    }

    fn link(&self, theta: &[f64]) -> Option<Vec<f64>> {
        ma1_link(theta[0], theta[1], self.nu_hat).ok().map(|(r1, r2)| vec![r1, r2])
    }

    fn jacobian_det(&self, theta: &[f64]) -> Option<f64> {
        ma1_jacobian_det(theta[0], self.nu_hat.0).ok()
    }
}

/// Posterior under the conditional likelihood and the induced prior,
/// normalized by quadrature. The `σ²` direction is integrated in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct Ma1Posterior {
    pub series: Vec<f64>,
    pub prior: Ma1Prior,
    offset: f64,
    log_total: f64,
}

impl Ma1Posterior {
    pub fn new(series: Vec<f64>, prior: Ma1Prior) -> Result<Self, NumericError> {
        let mut post = Self { series, prior, offset: 0.0, log_total: 0.0 };
        let grid = prior.a.linspace(401);
        post.offset = grid
            .iter()
            .map(|&a| post.log_strip(a, f64::NEG_INFINITY, f64::INFINITY))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let total = post.strip_integral(prior.a.lo, prior.a.hi, f64::NEG_INFINITY, f64::INFINITY, 1e-13)?;
        post.log_total = post.offset + total.ln();
        Ok(post)
    }

    /// `ln` of `|det ∂L(a)| ∫ exp(loglik(a, s)) ds` over the support at `a`
    /// clipped to `[s_lo, s_hi]`.
    fn log_strip(&self, a: f64, s_lo: f64, s_hi: f64) -> Result<f64, NumericError> {
        let support = self.prior.sigma2_support(a);
        let (lo, hi) = (support.lo.max(s_lo), support.hi.min(s_hi));
        let q = residual_sum_of_squares(a, &self.series);
        let det = ma1_jacobian_det(a, self.prior.nu_hat.0).map_err(|e| NumericError::Domain(e.to_string()))?;
        Ok(det.ln() + log_variance_kernel_integral(self.series.len(), q, lo, hi)?)
    }

    fn strip_integral(&self, a_lo: f64, a_hi: f64, s_lo: f64, s_hi: f64, tol: f64) -> Result<f64, NumericError> {
        let (a_lo, a_hi) = (a_lo.max(self.prior.a.lo), a_hi.min(self.prior.a.hi));
        if !(a_hi > a_lo) {
            return Ok(0.0);
        }
        integrate(
            |a| self.log_strip(a, s_lo, s_hi).map_or(f64::NAN, |v| (v - self.offset).exp()),
            a_lo,
            a_hi,
            tol,
        )
    }

    pub fn log_density(&self, a: f64, sigma2: f64) -> f64 {
        if !self.prior.contains(a, sigma2) {
            return f64::NEG_INFINITY;
        }
        let det = ma1_jacobian_det(a, self.prior.nu_hat.0).unwrap_or(0.0);
        det.ln() + ma1_conditional_loglik(a, sigma2, &self.series).unwrap_or(f64::NEG_INFINITY)
            - self.log_total
    }
}

impl ExactPosterior for Ma1Posterior {
    fn bounds(&self) -> Vec<Interval> {
        self.prior.bounding_box()
    }

    fn density(&self, theta: &[f64]) -> f64 {
        self.log_density(theta[0], theta[1]).exp()
    }

    fn box_mass(&self, lo: &[f64], hi: &[f64]) -> Result<f64, NumericError> {
        let total = (self.log_total - self.offset).exp();
        Ok(self.strip_integral(lo[0], hi[0], lo[1], hi[1], 1e-12 * total)? / total)
    }

    /// Maximizes the profile over `a` with `σ²` at its clamped optimum
    /// `Σû²/n`.
    fn map(&self) -> Vec<f64> {
        let n = self.series.len() as f64;
        let best_s2 = |a: f64| {
            let s = self.prior.sigma2_support(a);
            (residual_sum_of_squares(a, &self.series) / n).clamp(s.lo, s.hi)
        };
        let (a, _) = grid_then_golden_max(
            |a| self.log_density(a, best_s2(a)),
            &self.prior.a.linspace(2001),
            1e-9,
        );
        vec![a, best_s2(a)]
    }
}

/// Settings of the exact-likelihood MCMC oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub chains: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { iterations: 50_000, burn_in: 5_000, chains: 6 }
    }
}

/// Proposal of the oracle: covariance `[[5e-2, 5e-4], [5e-4, 5e-2]]`
/// truncated to `[-0.5, 0.5] x (0, ∞)`.
pub fn ma1_oracle_proposal() -> ProposalSpec {
    ProposalSpec::new(
        vec![vec![5e-2, 5e-4], vec![5e-4, 5e-2]],
        vec![Interval { lo: -0.5, hi: 0.5 }, Interval { lo: 0.0, hi: f64::INFINITY }],
    )
    .expect("fixed covariance is positive definite")
}

/// Metropolis-Hastings on the conditional likelihood times the induced prior.
/// Chains start at prior draws, run on streams `0..chains` of `seed`, and
/// are merged after burn-in.
pub fn ma1_exact_posterior_mcmc(
    series: &[f64],
    prior: &Ma1Prior,
    settings: &OracleSettings,
    seed: u64,
) -> Result<Chain, SamplerError> {
    let proposal = ma1_oracle_proposal();
    let log_target = |t: &[f64]| {
        let p = prior.density(t[0], t[1]);
        if p > 0.0 {
            p.ln() + ma1_conditional_loglik(t[0], t[1], series).unwrap_or(f64::NEG_INFINITY)
        } else {
            f64::NEG_INFINITY
        }
    };
    let chains = run_streams(seed, settings.chains, |_, mut rng| {
        let start = prior.sample(&mut rng);
        metropolis_hastings(log_target, &proposal, &start, settings.iterations, settings.burn_in, &mut rng)
    })?;
    Chain::merge(&chains)
}

#[cfg(test)]
mod tests {
    use super::*;

    const THEORY: (f64, f64) = (1.01, 0.1 / 1.01);

    fn prior() -> Ma1Prior {
        Ma1Prior::new(Interval { lo: -0.45, hi: 0.45 }, Interval { lo: 0.3, hi: 1.7 }, THEORY).unwrap()
    }

    #[test]
    fn simulated_moments_match_theory() {
        let mut rng = RngStream::new(1, 0);
        let x = ma1_simulate(0.1, 1.0, 1_000_000, &mut rng).unwrap();
        let (v, r) = estimate_nu_hat(&x).unwrap();
        assert!((v - 1.01).abs() < 0.01);
        assert!((r - 0.1 / 1.01).abs() < 0.005);
        let lag2 = crate::equivalence::PairSet::new((0..x.len() - 2).map(|i| (x[i], x[i + 2])).collect());
        assert!(lag2.pearson().abs() < 0.005);
        let iid = ma1_simulate(0.0, 1.0, 100_000, &mut rng).unwrap();
        assert!(estimate_nu_hat(&iid).unwrap().1.abs() < 0.015);
    }

    #[test]
    fn link_and_inverse_round_trip_at_the_point_of_equality() {
        let (r1, r2) = ma1_link(0.1, 1.0, THEORY).unwrap();
        assert!((r1 - 1.0).abs() < 1e-12 && r2.abs() < 1e-12);
        let (r1, r2) = ma1_link(0.0, 2.0, (2.0, 0.0)).unwrap();
        assert!((r1 - 1.0).abs() < 1e-15 && r2 == 0.0);
        for a in [-0.45, -0.2, 0.0, 0.33, 0.5] {
            let (r1, r2) = ma1_link(a, 0.7, THEORY).unwrap();
            let (a2, s2) = ma1_inverse_link(r1, r2, THEORY).unwrap();
            assert!((a2 - a).abs() < 1e-9 && (s2 - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn link_is_injective_on_a_grid() {
        let a = Interval { lo: -0.5, hi: 0.5 }.linspace(200);
        let s = Interval { lo: 0.05, hi: 3.0 }.linspace(200);
        let mut images: Vec<(f64, f64)> =
            a.iter().flat_map(|&a| s.iter().map(move |&s| ma1_link(a, s, THEORY).unwrap())).collect();
        images.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let collisions = images
            .windows(2)
            .filter(|w| (w[0].0 - w[1].0).abs() < 1e-12 && (w[0].1 - w[1].1).abs() < 1e-12)
            .count();
        assert_eq!(collisions, 0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        assert!((ma1_jacobian_det(0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((ma1_jacobian_det(0.5, 2.0).unwrap() - 0.9375 / 1.3125 / 2.0).abs() < 1e-15);
        let mut rng = RngStream::new(2, 0);
        for _ in 0..100 {
            let a = rng.uniform_in(-0.5, 0.5);
            let s = rng.uniform_in(0.1, 3.0);
            let h = 1e-5;
            let da_p = ma1_link(a + h, s, THEORY).unwrap();
            let da_m = ma1_link(a - h, s, THEORY).unwrap();
            let ds_p = ma1_link(a, s + h, THEORY).unwrap();
            let ds_m = ma1_link(a, s - h, THEORY).unwrap();
            let j11 = (da_p.0 - da_m.0) / (2.0 * h);
            let j12 = (ds_p.0 - ds_m.0) / (2.0 * h);
            let j21 = (da_p.1 - da_m.1) / (2.0 * h);
            let j22 = (ds_p.1 - ds_m.1) / (2.0 * h);
            let fd = (j11 * j22 - j12 * j21).abs();
            let closed = ma1_jacobian_det(a, THEORY.0).unwrap();
            assert!((fd / closed - 1.0).abs() < 1e-6, "a = {a}: {fd} vs {closed}");
        }
    }

    #[test]
    fn rho_bounds_from_the_formula_and_the_figure_range() {
        let (r1, r2) =
            ma1_rho_bounds(Interval { lo: -0.43, hi: 0.43 }, Interval { lo: 0.3, hi: 1.7 }, THEORY).unwrap();
        assert!((r1.lo - 0.297).abs() < 5e-4 && (r1.hi - 1.994).abs() < 5e-4, "{r1:?}");
        assert!((r2.lo + 0.480).abs() < 5e-4 && (r2.hi - 0.281).abs() < 5e-4, "{r2:?}");
        let p = prior();
        assert!((p.rho1.lo - 0.297).abs() < 5e-4 && (p.rho1.hi - 2.024).abs() < 5e-4);
        assert!((p.rho2.lo + 0.493).abs() < 5e-4 && (p.rho2.hi - 0.294).abs() < 5e-4);
    }

    #[test]
    fn prior_support_contains_the_box_preimage() {
        let p = prior();
        for a in p.a.linspace(41) {
            for s in p.sigma2.linspace(41) {
                let (r1, r2) = ma1_link(a, s, THEORY).unwrap();
                assert!(p.rho2.contains(r2));
                if p.rho1.contains(r1) {
                    assert!(p.contains(a, s));
                }
            }
        }
        assert_eq!(p.density(0.47, 1.0), 0.0);
    }

    #[test]
    fn prior_density_integrates_to_one() {
        let p = prior();
        let mass = integrate(
            |a| {
                let s = p.sigma2_support(a);
                p.density(a, 0.5 * (s.lo + s.hi)) * s.width()
            },
            p.a.lo,
            p.a.hi,
            1e-12,
        )
        .unwrap();
        assert!((mass - 1.0).abs() < 1e-9, "{mass}");
    }

    #[test]
    fn prior_pushforward_is_uniform_on_the_rectangle() {
        let p = prior();
        let mut rng = RngStream::new(3, 0);
        let bins = 20;
        let mut counts = vec![0usize; bins * bins];
        let draws = 200_000;
        for _ in 0..draws {
            let [a, s] = p.sample(&mut rng);
            assert!(p.contains(a, s));
            let (r1, r2) = ma1_link(a, s, THEORY).unwrap();
            let i = (((r1 - p.rho1.lo) / p.rho1.width()) * bins as f64).floor().clamp(0.0, 19.0) as usize;
            let j = (((r2 - p.rho2.lo) / p.rho2.width()) * bins as f64).floor().clamp(0.0, 19.0) as usize;
            counts[i * bins + j] += 1;
        }
        let expected = draws as f64 / (bins * bins) as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let pval = crate::numeric::chi2_sf(stat, (bins * bins - 1) as f64).unwrap();
        assert!(pval > 0.001, "chi2 = {stat}, p = {pval}");
    }

    #[test]
    fn subsets_have_the_expected_sizes() {
        let mut rng = RngStream::new(4, 0);
        let x = ma1_simulate(0.1, 1.0, 150, &mut rng).unwrap();
        let ignore = ma1_subset(&x, SubsetScheme::IgnoreAutocorr).unwrap();
        assert_eq!(ignore.iter().map(|s| s.count()).collect::<Vec<_>>(), vec![150, 149]);
        let thin = ma1_subset(&x, SubsetScheme::ThinTwoFive).unwrap();
        assert_eq!(thin.iter().map(|s| s.count()).collect::<Vec<_>>(), vec![75, 75, 49, 49, 49]);
        if let Summary::Pairs(p) = &thin[4] {
            assert_eq!(p.pairs[1], (x[5], x[6]));
        } else {
            panic!("expected pairs");
        }
        for counts in [vec![75, 75, 49, 49, 49], vec![140, 10, 3, 60, 1]] {
            let len = SubsetScheme::ThinTwoFive.required_len(&counts).unwrap();
            let y = ma1_simulate(0.1, 1.0, len, &mut rng).unwrap();
            let got: Vec<usize> =
                SubsetScheme::ThinTwoFive.extract(&y, &counts).unwrap().iter().map(|s| s.count()).collect();
            assert_eq!(got, counts);
            assert!(SubsetScheme::ThinTwoFive.extract(&y[..len - 1], &counts).is_err());
        }
        assert_eq!(SubsetScheme::IgnoreAutocorr.required_len(&[276, 279]).unwrap(), 280);
        assert!(ma1_subset(&x[..5], SubsetScheme::IgnoreAutocorr).is_err());
    }

    #[test]
    fn conditional_loglik_reduces_and_profiles_correctly() {
        let x = [0.3, -1.2, 0.8, 0.1, -0.4];
        let iid: f64 = -2.5 * 2.0f64.ln() - x.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((ma1_conditional_loglik(0.0, 2.0, &x).unwrap() - iid).abs() < 1e-14);
        let q = residual_sum_of_squares(0.3, &x);
        let (best, _) = crate::numeric::golden_section_max(
            |s| ma1_conditional_loglik(0.3, s, &x).unwrap(),
            0.01,
            5.0,
            1e-10,
        );
        assert!((best - q / 5.0).abs() < 1e-5);
        assert!(ma1_conditional_loglik(0.3, 0.0, &x).is_err());
    }

    #[test]
    fn grid_posterior_is_normalized_and_consistent() {
        let mut rng = RngStream::new(5, 0);
        let x = ma1_pseudo_data(150, 0.1, 1.0, 200, &mut rng).unwrap();
        let model = Ma1Model::new(x, Interval { lo: -0.45, hi: 0.45 }, Interval { lo: 0.3, hi: 1.7 }, SubsetScheme::IgnoreAutocorr).unwrap();
        let post = model.exact_posterior().unwrap();
        let b = post.bounds();
        let total = post.box_mass(&[b[0].lo, b[1].lo], &[b[0].hi, b[1].hi]).unwrap();
        assert!((total - 1.0).abs() < 1e-9);
        let split: f64 = [(b[0].lo, 0.0), (0.0, b[0].hi)]
            .iter()
            .map(|&(lo, hi)| post.box_mass(&[lo, b[1].lo], &[hi, b[1].hi]).unwrap())
            .sum();
        assert!((split - 1.0).abs() < 1e-9);
        let cell = post.box_mass(&[0.05, 0.95], &[0.06, 0.96]).unwrap();
        let mid = post.density(&[0.055, 0.955]) * 1e-4;
        assert!((cell / mid - 1.0).abs() < 1e-2);
        let map = post.map();
        assert!((map[0] - 0.1).abs() < 0.15 && (map[1] - 1.0).abs() < 0.25, "{map:?}");
    }

    #[test]
    fn oracle_chain_agrees_with_the_grid_posterior() {
        let mut rng = RngStream::new(6, 0);
        let x = ma1_pseudo_data(150, 0.1, 1.0, 200, &mut rng).unwrap();
        let model = Ma1Model::new(x, Interval { lo: -0.45, hi: 0.45 }, Interval { lo: 0.3, hi: 1.7 }, SubsetScheme::IgnoreAutocorr).unwrap();
        let post = model.exact_posterior().unwrap();
        let settings = OracleSettings { iterations: 30_000, burn_in: 2_000, chains: 4 };
        let chain = ma1_exact_posterior_mcmc(&model.series, &model.prior, &settings, 7).unwrap();
        assert_eq!(chain.len(), 4 * 28_000);
        let rate = chain.acceptance_rate();
        assert!(rate > 0.1 && rate < 0.35, "acceptance {rate}");
        let b = post.bounds();
        let below: f64 = post.box_mass(&[b[0].lo, b[1].lo], &[0.1, b[1].hi]).unwrap();
        let freq = chain.kept_column(0).iter().filter(|a| **a < 0.1).count() as f64 / chain.len() as f64;
        assert!((freq - below).abs() < 0.03, "{freq} vs {below}");
    }
}
