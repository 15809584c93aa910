//! End-to-end runs: build a model from a config, calibrate its tests, sample,
//! and score the result against the exact posterior.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    calibrate_at_m, calibrate_m, evaluate_fixed, report_for, CalibrationError, CalibrationReport,
    CalibrationSettings,
};
use crate::config::{
    CalibrationConfig, ConfigError, DiagnosticsConfig, ModelConfig, SamplerConfig, SamplerKind, TestOverride,
};
use crate::diagnostics::{
    accuracy_report, exact_bin_masses, in_hpd, map_from_samples, AccuracyInputs, AccuracyReport, Binning,
    DiagnosticsError, KlDirection,
};
use crate::equivalence::{
    chi2_critical_region, Aux, EquivalenceError, EquivalenceTest, ObservedStats, Summary, TestConfig, TestKind,
    ToleranceRegion,
};
use crate::io::{read_series, IoError};
use crate::models::ma1::{ma1_exact_posterior_mcmc, ma1_oracle_proposal, ma1_pseudo_data, OracleSettings};
use crate::models::{ExactPosterior, Ma1Model, Model, ModelError, NormalVarianceModel};
use crate::numeric::{Interval, RngStream};
use crate::samplers::{
    abc_star_mcmc, abc_star_rejection, run_streams, standard_abc_rejection, AnnealingSchedule, Chain,
    McmcSettings, ProposalSpec, RejectionSettings, SampleSet, SamplerError,
};

/// Stream id reserved for generating pseudo data.
const PSEUDO_DATA_STREAM: u64 = 1 << 40;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Equivalence(#[from] EquivalenceError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{0}")]
    Unsupported(String),
}

/// A test before calibration: kind and sizes, the observed reference and
/// the prior's image in `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestTemplate {
    pub config: TestConfig,
    pub observed: ObservedStats,
    pub rho_support: Interval,
}

/// A model bound to its observed data.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSetup {
    Normal(NormalVarianceModel),
    Ma1(Ma1Model),
}

impl ModelSetup {
    /// Read the data file, or generate pseudo data from `seed`.
    pub fn from_config(cfg: &ModelConfig, seed: u64) -> Result<Self, PipelineError> {
        let mut rng = RngStream::new(seed, PSEUDO_DATA_STREAM);
        match cfg {
            ModelConfig::Normal(c) => {
                let data = match &c.data {
                    Some(path) => read_series(path)?,
                    None => NormalVarianceModel::pseudo_data(c.n, c.sigma2_hat, &mut rng),
                };
                let prior = Interval::new(c.prior[0], c.prior[1]).map_err(|e| ModelError::Domain(e.to_string()))?;
                Ok(Self::Normal(NormalVarianceModel::new(data, prior)?))
            }
            ModelConfig::Ma1(c) => {
                let data = match &c.data {
                    Some(path) => read_series(path)?,
                    None => ma1_pseudo_data(c.n, c.a0, c.sigma2_0, c.candidates, &mut rng)?,
                };
                let a = Interval { lo: c.a_range[0], hi: c.a_range[1] };
                let s2 = Interval { lo: c.sigma2_range[0], hi: c.sigma2_range[1] };
                Ok(Self::Ma1(Ma1Model::new(data, a, s2, c.scheme)?))
            }
        }
    }

    pub fn model(&self) -> &dyn Model {
        match self {
            Self::Normal(m) => m,
            Self::Ma1(m) => m,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Normal(_) => "normal",
            Self::Ma1(_) => "ma1",
        }
    }

    /// One template per summary set: χ² for value sets, TOSZ for pair sets.
    pub fn test_templates(&self, alpha: f64) -> Result<Vec<TestTemplate>, PipelineError> {
        match self {
            Self::Normal(m) => {
                let prior = m.prior_support;
                let s2 = m.sigma2_hat();
                Ok(vec![TestTemplate {
                    config: chi2_template(m.n(), alpha)?,
                    observed: ObservedStats::from_sum_of_squares(m.n(), m.sum_of_squares()),
                    rho_support: Interval { lo: prior.lo / s2, hi: prior.hi / s2 },
                }])
            }
            Self::Ma1(m) => m
                .observed_summaries()
                .iter()
                .map(|s| {
                    let observed = ObservedStats::from_summary(s)?;
                    let (config, rho_support) = match s {
                        Summary::Values(_) => (chi2_template(s.count(), alpha)?, m.prior.rho1),
                        Summary::Pairs(_) => (
                            TestConfig {
                                kind: TestKind::ToszCorrelation,
                                n: s.count(),
                                m: s.count(),
                                alpha,
                                tolerance: ToleranceRegion::symmetric(0.0, 0.3)?,
                                aux: Aux::default(),
                            },
                            m.prior.rho2,
                        ),
                    };
                    Ok(TestTemplate { config, observed, rho_support })
                })
                .collect(),
        }
    }

    pub fn exact_posterior(&self) -> Result<Box<dyn ExactPosterior>, PipelineError> {
        Ok(match self {
            Self::Normal(m) => Box::new(m.exact_posterior().map_err(CalibrationError::from)?),
            Self::Ma1(m) => Box::new(m.exact_posterior().map_err(CalibrationError::from)?),
        })
    }

    /// Diagnostics grid over the prior's bounding box.
    pub fn binning(&self, bins: usize) -> Result<Binning, PipelineError> {
        Ok(Binning::new(self.model().prior_bounds(), bins)?)
    }

    /// Default MCMC proposal: the oracle kernel for MA(1), variance 0.05
    /// for the normal model, truncated to the prior's bounding box.
    pub fn default_proposal(&self) -> Result<ProposalSpec, PipelineError> {
        let cov = match self {
            Self::Normal(_) => vec![vec![0.05]],
            Self::Ma1(_) => ma1_oracle_proposal().covariance,
        };
        Ok(ProposalSpec::new(cov, self.model().prior_bounds())?)
    }
}

fn chi2_template(n: usize, alpha: f64) -> Result<TestConfig, PipelineError> {
    Ok(TestConfig {
        kind: TestKind::ChiSqDispersion,
        n,
        m: n,
        alpha,
        tolerance: ToleranceRegion::new(0.5, 2.0, 1.0)?,
        aux: Aux::default(),
    })
}

pub fn calibration_settings(cfg: &CalibrationConfig, rho_support: Interval) -> CalibrationSettings {
    CalibrationSettings { epsilon: cfg.epsilon, target_power: cfg.target_power, ..Default::default() }
        .with_rho_support(rho_support)
}

/// Calibrate every template, honouring fixed `m` or fixed `(m, tau)`
/// overrides. Tests are calibrated in parallel.
pub fn calibrate_tests(
    templates: &[TestTemplate],
    cfg: &CalibrationConfig,
    overrides: &[TestOverride],
) -> Result<Vec<CalibrationReport>, PipelineError> {
    if overrides.len() > templates.len() {
        return Err(ConfigError::Invalid(format!(
            "{} test overrides for {} tests",
            overrides.len(),
            templates.len()
        ))
        .into());
    }
    templates
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let settings = calibration_settings(cfg, t.rho_support);
            let ov = overrides.get(i).cloned().unwrap_or_default();
            let report = match (ov.m, ov.tau) {
                (Some(m), Some([lo, hi])) => {
                    let fit = evaluate_fixed(&t.config, m, lo, hi, &t.observed, &settings)?;
                    report_for(&t.config, &fit, &t.observed, &settings)?
                }
                (Some(m), None) => {
                    let fit = calibrate_at_m(&t.config, m, &t.observed, &settings)?;
                    report_for(&t.config, &fit, &t.observed, &settings)?
                }
                (None, Some(_)) => {
                    return Err(ConfigError::Invalid("a fixed tau needs a fixed m".into()).into());
                }
                (None, None) => calibrate_m(&t.config, &t.observed, &settings)?,
            };
            Ok(report)
        })
        .collect()
}

pub fn build_tests(
    templates: &[TestTemplate],
    reports: &[CalibrationReport],
) -> Result<Vec<EquivalenceTest>, PipelineError> {
    templates
        .iter()
        .zip(reports)
        .map(|(t, r)| Ok(EquivalenceTest::new(r.config(), t.observed)?))
        .collect()
}

/// Sampler output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunOutput {
    Samples(SampleSet),
    Chains(Vec<Chain>),
}

impl RunOutput {
    /// Accepted draws (rejection) or post-burn-in states (MCMC).
    pub fn posterior_draws(&self) -> Vec<Vec<f64>> {
        match self {
            Self::Samples(s) => s.accepted_thetas(),
            Self::Chains(c) => c.iter().flat_map(|c| c.kept_thetas()).collect(),
        }
    }

    /// Acceptance of the sampler: accepted proposals, or accepted moves.
    pub fn acceptance_rate(&self) -> f64 {
        match self {
            Self::Samples(s) => s.acceptance_rate(),
            Self::Chains(c) => {
                let acc: usize = c.iter().map(|c| c.moves_accepted).sum();
                let prop: usize = c.iter().map(|c| c.moves_proposed).sum();
                if prop == 0 {
                    0.0
                } else {
                    acc as f64 / prop as f64
                }
            }
        }
    }
}

pub fn run_sampler(
    setup: &ModelSetup,
    tests: &[EquivalenceTest],
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<RunOutput, PipelineError> {
    let model = setup.model();
    match cfg.kind {
        SamplerKind::Rejection => {
            let settings = RejectionSettings { keep_rejected: cfg.keep_rejected, ..RejectionSettings::new(cfg.iterations) };
            Ok(RunOutput::Samples(abc_star_rejection(model, tests, &settings, seed)?))
        }
        SamplerKind::StandardAbc => {
            if cfg.tolerances.is_empty() {
                return Err(ConfigError::Invalid("standard ABC needs sampler.tolerances".into()).into());
            }
            let tolerances: Vec<Interval> =
                cfg.tolerances.iter().map(|t| Interval { lo: t[0], hi: t[1] }).collect();
            let size = cfg.sim_size.unwrap_or(model.observed_data().len());
            Ok(RunOutput::Samples(standard_abc_rejection(model, &tolerances, size, cfg.iterations, 8192, seed)?))
        }
        SamplerKind::Mcmc => {
            let proposal = match &cfg.proposal_cov {
                Some(cov) => ProposalSpec::new(cov.clone(), model.prior_bounds())?,
                None => setup.default_proposal()?,
            };
            let mut settings = McmcSettings::new(cfg.iterations, cfg.burn_in);
            settings.annealing = cfg.annealing_factor.map(|f| AnnealingSchedule::over_burn_in(f, cfg.burn_in));
            let chains = run_streams(seed, cfg.chains, |_, mut rng| {
                abc_star_mcmc(model, tests, &proposal, &settings, &mut rng)
            })?;
            Ok(RunOutput::Chains(chains))
        }
    }
}

/// Exact posterior with its cell masses on the diagnostics grid.
pub struct Reference {
    pub posterior: Box<dyn ExactPosterior>,
    pub binning: Binning,
    pub masses: Vec<f64>,
}

impl Reference {
    pub fn new(setup: &ModelSetup, bins: usize) -> Result<Self, PipelineError> {
        let posterior = setup.exact_posterior()?;
        let binning = setup.binning(bins)?;
        let masses = exact_bin_masses(posterior.as_ref(), &binning)?;
        Ok(Self { posterior, binning, masses })
    }

    pub fn score(
        &self,
        draws: &[Vec<f64>],
        acceptance_rate: f64,
        alpha: f64,
        direction: KlDirection,
        seed: u64,
    ) -> Result<AccuracyReport, PipelineError> {
        let inputs = AccuracyInputs {
            posterior: self.posterior.as_ref(),
            binning: &self.binning,
            exact_masses: &self.masses,
            direction,
            acceptance_rate,
            alpha,
            seed,
        };
        Ok(accuracy_report(draws, &inputs)?)
    }
}

/// Score a run; `alpha` enters only the true-positive bound.
pub fn accuracy(
    setup: &ModelSetup,
    output: &RunOutput,
    diagnostics: &DiagnosticsConfig,
    alpha: f64,
    seed: u64,
) -> Result<AccuracyReport, PipelineError> {
    let reference = Reference::new(setup, diagnostics.bins)?;
    reference.score(&output.posterior_draws(), output.acceptance_rate(), alpha, diagnostics.kl_direction, seed)
}

/// Seed of replicate `r`, spread so nearby replicates share no streams.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    seed ^ (r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One row of a reproduction table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub published: String,
    pub computed: String,
    pub tolerance: String,
    pub pass: bool,
}

/// Up to four decimals, trailing zeros dropped.
fn short(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

impl Check {
    pub fn within(name: &str, published: f64, computed: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            published: short(published),
            computed: format!("{computed:.4}"),
            tolerance: format!("±{}", short(tol)),
            pass: (computed - published).abs() <= tol,
        }
    }

    pub fn at_most(name: &str, published: &str, computed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            published: published.into(),
            computed: format!("{computed:.4}"),
            tolerance: format!("<= {}", short(bound)),
            pass: computed <= bound,
        }
    }

    pub fn flag(name: &str, published: &str, computed: &str, pass: bool) -> Self {
        Self { name: name.into(), published: published.into(), computed: computed.into(), tolerance: "-".into(), pass }
    }
}

/// The three published χ² critical regions.
pub fn reproduce_critical_regions() -> Result<Vec<Check>, PipelineError> {
    let cases = [
        ((60, 0.35, 1.65), (0.509, 1.009)),
        ((60, 0.477, 2.2), (0.704, 1.368)),
        ((108, 0.589, 1.752), (1.41, 2.22)),
    ];
    let mut out = Vec::new();
    for ((m, lo, hi), (c_lo, c_hi)) in cases {
        let r = chi2_critical_region(60, m, 0.01, &ToleranceRegion::new(lo, hi, 1.0)?)?;
        out.push(Check::within(&format!("c- (m={m}, tau=[{lo}, {hi}])"), c_lo, r.c_minus, 0.005));
        out.push(Check::within(&format!("c+ (m={m}, tau=[{lo}, {hi}])"), c_hi, r.c_plus, 0.005));
    }
    Ok(out)
}

/// Sizes of the normal-example reproduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalReproduction {
    pub replicates: usize,
    pub proposals: usize,
    pub standard_proposals: usize,
}

impl Default for NormalReproduction {
    fn default() -> Self {
        Self { replicates: 100, proposals: 1_000_000, standard_proposals: 1_000_000 }
    }
}

/// Running example: calibration, nABC-r accuracy over replicates and the
/// standard ABC baseline.
pub fn reproduce_normal_example(seed: u64, sizes: &NormalReproduction) -> Result<Vec<Check>, PipelineError> {
    let setup = ModelSetup::from_config(&ModelConfig::Normal(Default::default()), seed)?;
    let cal = CalibrationConfig::default();
    let templates = setup.test_templates(cal.alpha)?;
    let reports = calibrate_tests(&templates, &cal, &[])?;
    let r = &reports[0];
    let mut out = vec![
        Check {
            name: "m".into(),
            published: "108".into(),
            computed: r.m.to_string(),
            tolerance: "[102, 114]".into(),
            pass: (102..=114).contains(&r.m),
        },
        Check::within("tau-", 0.589, r.tau_minus, 0.01),
        Check::within("tau+", 1.752, r.tau_plus, 0.01),
    ];
    let tests = build_tests(&templates, &reports)?;
    let reference = Reference::new(&setup, 100)?;
    let sampler = SamplerConfig { iterations: sizes.proposals, ..Default::default() };
    let mut acc = Vec::new();
    let mut kls = Vec::new();
    let mut floors = Vec::new();
    let mut se = Vec::new();
    for rep in 0..sizes.replicates {
        let s = replicate_seed(seed, rep);
        let run = run_sampler(&setup, &tests, &sampler, s)?;
        let report = reference.score(&run.posterior_draws(), run.acceptance_rate(), cal.alpha, KlDirection::AbcToExact, s)?;
        acc.push(report.acceptance_rate);
        kls.push(report.kl_divergence);
        floors.push(report.kl_floor);
        se.push(report.map_squared_error);
        if rep == 0 {
            out.push(Check::within("nABC-r MAP (first replicate)", 1.0, report.map_estimate[0], 0.05));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    out.push(Check::within("nABC-r acceptance %", 13.0, 100.0 * mean(&acc), 2.0));
    let kl_name = format!("nABC-r KL (exact-draw floor {:.4})", mean(&floors));
    out.push(Check::at_most(&kl_name, "0.007", mean(&kls), 0.02));
    out.push(Check::at_most("nABC-r MAP mse", "0.002", mean(&se), 0.01));

    let published = [(0.8, 4.84, 43.0), (0.4, 0.41, 22.0), (0.2, 0.11, 11.0), (0.05, 0.007, 3.0)];
    let mut previous = f64::INFINITY;
    let mut monotone = true;
    for (c, kl_pub, acc_pub) in published {
        let cfg = SamplerConfig {
            kind: SamplerKind::StandardAbc,
            iterations: sizes.standard_proposals,
            tolerances: vec![[-c, c]],
            ..Default::default()
        };
        let run = run_sampler(&setup, &[], &cfg, seed)?;
        let report = reference.score(&run.posterior_draws(), run.acceptance_rate(), cal.alpha, KlDirection::AbcToExact, seed)?;
        let target = if c == 0.05 { kl_pub + report.kl_floor } else { kl_pub };
        out.push(Check::within(&format!("ABC-r c={c} KL"), target, report.kl_divergence, 0.3 * target));
        out.push(Check::within(&format!("ABC-r c={c} acceptance %"), acc_pub, 100.0 * report.acceptance_rate, 3.0));
        monotone &= report.kl_divergence < previous;
        previous = report.kl_divergence;
    }
    out.push(Check::flag("ABC-r KL decreasing in c", "yes", if monotone { "yes" } else { "no" }, monotone));
    Ok(out)
}

/// Sizes of the MA(1) reproduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ma1Reproduction {
    pub proposals: usize,
    pub oracle: OracleSettings,
}

impl Default for Ma1Reproduction {
    fn default() -> Self {
        Self { proposals: 200_000, oracle: OracleSettings::default() }
    }
}

/// MA(1) example: calibration, nABC-r accuracy and the MCMC oracle.
pub fn reproduce_ma1_example(seed: u64, sizes: &Ma1Reproduction) -> Result<Vec<Check>, PipelineError> {
    let setup = ModelSetup::from_config(&ModelConfig::Ma1(Default::default()), seed)?;
    let ModelSetup::Ma1(model) = &setup else { unreachable!("built from an ma1 config") };
    let cal = CalibrationConfig::default();
    let templates = setup.test_templates(cal.alpha)?;
    let reports = calibrate_tests(&templates, &cal, &[])?;
    let (v, c) = (&reports[0], &reports[1]);
    let mut out = vec![
        Check::within("variance test m", 297.0, v.m as f64, 6.0),
        Check::within("variance test tau-", 0.705, v.tau_minus, 0.01),
        Check::within("variance test tau+", 1.432, v.tau_plus, 0.01),
        Check::within("correlation test m", 278.0, c.m as f64, 6.0),
        Check::within("correlation test tau-", -0.239, c.tau_minus, 0.01),
        Check::within("correlation test tau+", 0.239, c.tau_plus, 0.01),
    ];
    let tests = build_tests(&templates, &reports)?;
    let sampler = SamplerConfig { iterations: sizes.proposals, ..Default::default() };
    let run = run_sampler(&setup, &tests, &sampler, seed)?;
    let reference = Reference::new(&setup, 100)?;
    let report = reference.score(&run.posterior_draws(), run.acceptance_rate(), cal.alpha, KlDirection::AbcToExact, seed)?;
    let oracle = ma1_exact_posterior_mcmc(&model.series, &model.prior, &sizes.oracle, seed)?;
    let oracle_map = map_from_samples(&oracle.kept_thetas(), &reference.binning.bounds)?.theta;
    let se: f64 = report.map_estimate.iter().zip(&oracle_map).map(|(a, b)| (a - b).powi(2)).sum();
    out.push(Check::within("nABC-r acceptance %", 5.0, 100.0 * report.acceptance_rate, 2.0));
    let kl_name = format!("nABC-r KL (exact-draw floor {:.3})", report.kl_floor);
    out.push(Check::at_most(&kl_name, "0.07", report.kl_divergence, 0.15));
    out.push(Check::at_most("nABC-r MAP squared error vs oracle", "0.006", se, 0.02));
    out.push(Check::within("oracle acceptance %", 20.0, 100.0 * oracle.acceptance_rate(), 5.0));
    let inside = in_hpd(&reference.masses, &reference.binning, &report.map_estimate, 0.95);
    out.push(Check::flag("nABC-r MAP in 95% HPD", "yes", if inside { "yes" } else { "no" }, inside));
    Ok(out)
}
