//! Calibrated ABC* rejection sampler.

use serde::{Deserialize, Serialize};

use super::{decide_all, run_streams, SampleSet, SamplerError};
use crate::equivalence::EquivalenceTest;
use crate::models::Model;
use crate::numeric::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionSettings {
    pub proposals: usize,
    /// Keep rejected draws in the output.
    pub keep_rejected: bool,
    /// Proposals per independent stream. Fixing it makes the output
    /// independent of the thread count.
    pub chunk_size: usize,
}

impl RejectionSettings {
    pub fn new(proposals: usize) -> Self {
        Self { proposals, keep_rejected: false, chunk_size: 8192 }
    }
}

/// Draw `θ ~ π`, simulate, extract `m_k` summary values per test and accept
/// when every test accepts.
pub fn abc_star_rejection<M: Model + ?Sized>(
    model: &M,
    tests: &[EquivalenceTest],
    settings: &RejectionSettings,
    seed: u64,
) -> Result<SampleSet, SamplerError> {
    if tests.len() != model.summary_count() {
        return Err(SamplerError::Config(format!(
            "model has {} summary sets but {} tests were given",
            model.summary_count(),
            tests.len()
        )));
    }
    if settings.chunk_size == 0 {
        return Err(SamplerError::Config("chunk size must be positive".into()));
    }
    let counts: Vec<usize> = tests.iter().map(|t| t.config.m).collect();
    let size = model.required_sim_size(&counts)?;
    let chunks = settings.proposals.div_ceil(settings.chunk_size);
    let parts = run_streams(seed, chunks, |i, mut rng| {
        let todo = settings.chunk_size.min(settings.proposals - i * settings.chunk_size);
        let mut out = SampleSet::empty(model.dim(), tests.len(), settings.keep_rejected);
        for _ in 0..todo {
            draw_once(model, tests, &counts, size, &mut rng, &mut out);
        }
        Ok(out)
    })?;
    if parts.is_empty() {
        return Ok(SampleSet::empty(model.dim(), tests.len(), settings.keep_rejected));
    }
    SampleSet::merge(parts)
}

fn draw_once<M: Model + ?Sized>(
    model: &M,
    tests: &[EquivalenceTest],
    counts: &[usize],
    size: usize,
    rng: &mut RngStream,
    out: &mut SampleSet,
) {
    let theta = model.prior_sample(rng);
    let summaries = model
        .simulate(&theta, size, rng)
        .and_then(|raw| model.extract_summaries(&raw, counts));
    match summaries {
        Ok(s) => {
            let (z, accepted) = decide_all(tests, &s);
            out.record(&theta, &z, accepted);
        }
        Err(_) => {
            out.failures += 1;
            out.record(&theta, &vec![f64::NAN; tests.len()], false);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equivalence::{Aux, ObservedStats, TestConfig, TestKind, ToleranceRegion};
    use crate::models::NormalVarianceModel;
    use crate::numeric::{integrate, Interval};

    fn setup() -> (NormalVarianceModel, EquivalenceTest) {
        let mut rng = RngStream::new(11, 0);
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
        (model, test)
    }

    #[test]
    fn accepted_draws_lie_in_the_critical_region() {
        let (model, test) = setup();
        let s = abc_star_rejection(&model, std::slice::from_ref(&test), &RejectionSettings::new(20_000), 3).unwrap();
        assert_eq!(s.proposals, 20_000);
        for r in 0..s.rows() {
            assert!(test.region.contains(s.z(r)[0]));
        }
    }

    #[test]
    fn acceptance_rate_matches_prior_averaged_power() {
        let (model, test) = setup();
        let n = 100_000;
        let s = abc_star_rejection(&model, std::slice::from_ref(&test), &RejectionSettings::new(n), 4).unwrap();
        let s2 = model.sigma2_hat();
        let expected =
            integrate(|v| test.power(v / s2).unwrap(), 0.2, 4.0, 1e-10).unwrap() / 3.8;
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((s.acceptance_rate() - expected).abs() < 3.0 * se, "{} vs {expected}", s.acceptance_rate());
    }

    #[test]
    fn unreachable_region_accepts_nothing_and_runs_are_reproducible() {
        let (model, mut test) = setup();
        let mut settings = RejectionSettings::new(3000);
        settings.chunk_size = 1000;
        let a = abc_star_rejection(&model, &[test.clone()], &settings, 9).unwrap();
        let b = abc_star_rejection(&model, &[test.clone()], &settings, 9).unwrap();
        assert_eq!(a, b);
        test.region.c_minus = 1e6;
        test.region.c_plus = 2e6;
        let c = abc_star_rejection(&model, &[test], &settings, 9).unwrap();
        assert_eq!(c.accepted_count(), 0);
    }
}
