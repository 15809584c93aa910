//! ABC* Metropolis-Hastings with annealed tolerances, and a plain MH kernel
//! for exact-likelihood oracles.

use serde::{Deserialize, Serialize};

use super::{decide_all, Chain, ProposalSpec, SamplerError};
use crate::equivalence::{EquivalenceTest, Summary, TestKind, ToleranceRegion};
use crate::models::Model;
use crate::numeric::RngStream;

/// Geometric annealing: at burn-in iteration `t` the tolerance excess
/// `τ - ρ*` and the proposal covariance are multiplied by
/// `f = 1 + (initial_factor - 1) * decay^t`. Ratio tolerances are widened
/// on the log scale, `τ → ρ* (τ/ρ*)^f`, so they stay positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    pub initial_factor: f64,
    pub decay: f64,
}

impl AnnealingSchedule {
    /// Schedule whose excess factor falls to 1e-3 of its start after 80% of
    /// the burn-in.
    pub fn over_burn_in(initial_factor: f64, burn_in: usize) -> Self {
        let steps = (0.8 * burn_in as f64).max(1.0);
        Self { initial_factor, decay: 1e-3f64.powf(1.0 / steps) }
    }

    pub fn factor(&self, t: usize) -> f64 {
        1.0 + (self.initial_factor - 1.0) * self.decay.powf(t as f64)
    }

    pub fn describe(&self) -> String {
        format!("geometric: factor 1 + {}*{}^t during burn-in", self.initial_factor - 1.0, self.decay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub annealing: Option<AnnealingSchedule>,
    /// Prior draws tried when looking for a start that passes every test.
    pub init_attempts: usize,
}

impl McmcSettings {
    pub fn new(iterations: usize, burn_in: usize) -> Self {
        Self { iterations, burn_in, annealing: None, init_attempts: 1_000_000 }
    }

    fn validate(&self) -> Result<(), SamplerError> {
        if self.burn_in >= self.iterations {
            return Err(SamplerError::Config(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if let Some(a) = self.annealing {
            if !(a.initial_factor >= 1.0) || !(a.decay > 0.0 && a.decay < 1.0) {
                return Err(SamplerError::Config(format!("invalid annealing schedule {a:?}")));
            }
        }
        Ok(())
    }
}

fn widened(base: &[EquivalenceTest], factor: f64) -> Result<Vec<EquivalenceTest>, SamplerError> {
    base.iter()
        .map(|t| {
            let mut t = t.clone();
            if factor != 1.0 {
                let tol = t.config.tolerance;
                let widen = |tau: f64| match t.config.kind {
                    TestKind::ChiSqDispersion => tol.rho_star * (tau / tol.rho_star).powf(factor),
                    _ => tol.rho_star + (tau - tol.rho_star) * factor,
                };
                let region = ToleranceRegion {
                    tau_minus: widen(tol.tau_minus),
                    tau_plus: widen(tol.tau_plus),
                    rho_star: tol.rho_star,
                };
                t.retune(region)?;
            }
            Ok(t)
        })
        .collect()
}

struct State {
    theta: Vec<f64>,
    summaries: Vec<Summary>,
    z: Vec<f64>,
    log_prior: f64,
}

/// ABC* Metropolis-Hastings. A move to `θ'` is accepted with probability
/// `min(1, q(θ'→θ)π(θ') / (q(θ→θ')π(θ)))` times the product of test
/// indicators. During burn-in the tolerances and the proposal covariance
/// follow the annealing schedule, with critical regions re-solved at each
/// change. Burn-in is extended if the state at its end fails the final
/// tests, so every kept state satisfies them.
pub fn abc_star_mcmc<M: Model + ?Sized>(
    model: &M,
    tests: &[EquivalenceTest],
    proposal: &ProposalSpec,
    settings: &McmcSettings,
    rng: &mut RngStream,
) -> Result<Chain, SamplerError> {
    settings.validate()?;
    if tests.len() != model.summary_count() || proposal.dim() != model.dim() {
        return Err(SamplerError::Config("tests or proposal do not match the model".into()));
    }
    let counts: Vec<usize> = tests.iter().map(|t| t.config.m).collect();
    let size = model.required_sim_size(&counts)?;
    let simulate = |theta: &[f64], rng: &mut RngStream| -> Option<Vec<Summary>> {
        model
            .simulate(theta, size, rng)
            .and_then(|raw| model.extract_summaries(&raw, &counts))
            .ok()
    };

    let mut factor = settings.annealing.map_or(1.0, |a| a.factor(0));
    let mut active = widened(tests, factor)?;
    let mut kernel = proposal.scaled(factor)?;

    let mut state = None;
    for _ in 0..settings.init_attempts {
        let theta = model.prior_sample(rng);
        let prior = model.prior_density(&theta);
        if !(prior > 0.0) || !proposal.in_box(&theta) {
            continue;
        }
        if let Some(summaries) = simulate(&theta, rng) {
            let (z, ok) = decide_all(&active, &summaries);
            if ok {
                state = Some(State { theta, summaries, z, log_prior: prior.ln() });
                break;
            }
        }
    }
    let mut state = state.ok_or_else(|| {
        SamplerError::Init(format!("no start passed the tests in {} prior draws", settings.init_attempts))
    })?;

    let d = model.dim();
    let mut chain = Chain {
        dim: d,
        k: tests.len(),
        thetas: Vec::with_capacity(settings.iterations * d),
        zs: Vec::with_capacity(settings.iterations * tests.len()),
        proposal_covariance: proposal.covariance.clone(),
        burn_in: settings.burn_in,
        annealing_schedule: settings.annealing.map_or_else(|| "none".to_string(), |a| a.describe()),
        moves_accepted: 0,
        moves_proposed: 0,
    };
    let mut in_burn_in = true;
    for t in 0..settings.iterations {
        if in_burn_in {
            let target = match settings.annealing {
                Some(a) if t < settings.burn_in => a.factor(t),
                _ => 1.0,
            };
            if target != factor && ((target - factor).abs() > 1e-3 * factor || target == 1.0) {
                factor = target;
                active = widened(tests, factor)?;
                kernel = proposal.scaled(factor)?;
            }
            if t >= settings.burn_in && factor == 1.0 && decide_all(&active, &state.summaries).1 {
                in_burn_in = false;
                chain.burn_in = t;
            }
        }
        if !in_burn_in {
            chain.moves_proposed += 1;
        }
        let cand = kernel.sample(&state.theta, rng)?;
        let prior = model.prior_density(&cand);
        if prior > 0.0 {
            let log_ratio = prior.ln() - state.log_prior + kernel.log_hastings_ratio(&state.theta, &cand)?;
            if rng.uniform().ln() < log_ratio {
                if let Some(summaries) = simulate(&cand, rng) {
                    let (z, ok) = decide_all(&active, &summaries);
                    if ok {
                        state = State { theta: cand, summaries, z, log_prior: prior.ln() };
                        if !in_burn_in {
                            chain.moves_accepted += 1;
                        }
                    }
                }
            }
        }
        chain.thetas.extend_from_slice(&state.theta);
        chain.zs.extend_from_slice(&state.z);
    }
    if in_burn_in {
        return Err(SamplerError::Init(
            "chain never satisfied the final tests after burn-in".into(),
        ));
    }
    Ok(chain)
}

/// Plain Metropolis-Hastings on `log_target` with the truncated kernel.
pub fn metropolis_hastings<F>(
    log_target: F,
    proposal: &ProposalSpec,
    start: &[f64],
    iterations: usize,
    burn_in: usize,
    rng: &mut RngStream,
) -> Result<Chain, SamplerError>
where
    F: Fn(&[f64]) -> f64,
{
    if burn_in >= iterations {
        return Err(SamplerError::Config("burn-in must be below the iteration count".into()));
    }
    let mut theta = start.to_vec();
    let mut current = log_target(&theta);
    if !current.is_finite() || !proposal.in_box(&theta) {
        return Err(SamplerError::Init(format!("start {start:?} has zero target density")));
    }
    let d = theta.len();
    let mut chain = Chain {
        dim: d,
        k: 0,
        thetas: Vec::with_capacity(iterations * d),
        zs: Vec::new(),
        proposal_covariance: proposal.covariance.clone(),
        burn_in,
        annealing_schedule: "none".into(),
        moves_accepted: 0,
        moves_proposed: 0,
    };
    for t in 0..iterations {
        let cand = proposal.sample(&theta, rng)?;
        let target = log_target(&cand);
        let counted = t >= burn_in;
        if counted {
            chain.moves_proposed += 1;
        }
        if target.is_finite() {
            let log_ratio = target - current + proposal.log_hastings_ratio(&theta, &cand)?;
            if rng.uniform().ln() < log_ratio {
                theta = cand;
                current = target;
                if counted {
                    chain.moves_accepted += 1;
                }
            }
        }
        chain.thetas.extend_from_slice(&theta);
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equivalence::{Aux, ObservedStats, TestConfig};
    use crate::models::NormalVarianceModel;
    use crate::numeric::Interval;

    fn normal_setup() -> (NormalVarianceModel, EquivalenceTest, ProposalSpec) {
        let mut rng = RngStream::new(31, 0);
        let x = NormalVarianceModel::pseudo_data(60, 1.0, &mut rng);
        let model = NormalVarianceModel::new(x, Interval::new(0.2, 4.0).unwrap()).unwrap();
        let cfg = TestConfig {
            kind: TestKind::ChiSqDispersion,
            n: 60,
            m: 108,
            alpha: 0.01,
            tolerance: ToleranceRegion::new(0.589, 1.752, 1.0).unwrap(),
            aux: Aux::default(),
        };
        let test =
            EquivalenceTest::new(cfg, ObservedStats::from_sum_of_squares(60, model.sum_of_squares())).unwrap();
        let prop = ProposalSpec::new(vec![vec![0.1]], vec![Interval::new(0.2, 4.0).unwrap()]).unwrap();
        (model, test, prop)
    }

    #[test]
    fn always_true_indicator_recovers_the_prior() {
        let (model, mut test, prop) = normal_setup();
        test.region.c_minus = f64::NEG_INFINITY;
        test.region.c_plus = f64::INFINITY;
        let settings = McmcSettings::new(200_000, 1000);
        let chain = abc_star_mcmc(&model, &[test], &prop, &settings, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(chain.len(), 200_000);
        let xs = chain.kept_column(0);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 2.1).abs() < 0.06, "mean {mean}");
        let below_one = xs.iter().filter(|v| **v < 1.0).count() as f64 / xs.len() as f64;
        assert!((below_one - 0.8 / 3.8).abs() < 0.02, "{below_one}");
    }

    #[test]
    fn kept_states_pass_the_final_tests_under_annealing() {
        let (model, test, prop) = normal_setup();
        let mut settings = McmcSettings::new(6000, 2000);
        settings.annealing = Some(AnnealingSchedule::over_burn_in(3.0, 2000));
        let chain =
            abc_star_mcmc(&model, std::slice::from_ref(&test), &prop, &settings, &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(chain.len(), 6000);
        assert!(chain.burn_in >= 2000);
        for i in chain.burn_in..chain.len() {
            assert!(test.region.contains(chain.z(i)[0]));
        }
        let again =
            abc_star_mcmc(&model, &[test], &prop, &settings, &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(chain, again);
    }

    #[test]
    fn metropolis_hastings_on_a_half_normal() {
        let prop = ProposalSpec::new(vec![vec![1.0]], vec![Interval { lo: 0.0, hi: f64::INFINITY }]).unwrap();
        let chain = metropolis_hastings(
            |t| if t[0] >= 0.0 { -0.5 * t[0] * t[0] } else { f64::NEG_INFINITY },
            &prop,
            &[0.5],
            200_000,
            1000,
            &mut RngStream::new(3, 0),
        )
        .unwrap();
        let xs = chain.kept_column(0);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.02, "{mean}");
    }

    #[test]
    fn bad_settings_are_rejected() {
        let (model, test, prop) = normal_setup();
        let settings = McmcSettings::new(10, 10);
        assert!(abc_star_mcmc(&model, &[test], &prop, &settings, &mut RngStream::new(4, 0)).is_err());
    }
}
