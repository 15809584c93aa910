//! Standard ABC rejection on raw summary differences.

use super::{run_streams, SampleSet, SamplerError};
use crate::models::Model;
use crate::numeric::Interval;

/// Accept `θ ~ π` when `c⁻_k <= S_k(y) - S_k(x) <= c⁺_k` for all `k`, with `y`
/// simulated at length `sim_size`.
pub fn standard_abc_rejection<M: Model + ?Sized>(
    model: &M,
    tolerances: &[Interval],
    sim_size: usize,
    proposals: usize,
    chunk_size: usize,
    seed: u64,
) -> Result<SampleSet, SamplerError> {
    let observed = model.summary_statistics(model.observed_data());
    if tolerances.len() != observed.len() {
        return Err(SamplerError::Config(format!(
            "{} tolerances for {} summary statistics",
            tolerances.len(),
            observed.len()
        )));
    }
    if tolerances.iter().any(|t| t.lo > 0.0 || t.hi < 0.0) {
        return Err(SamplerError::Config("tolerances must contain zero".into()));
    }
    if chunk_size == 0 {
        return Err(SamplerError::Config("chunk size must be positive".into()));
    }
    let k = observed.len();
    let chunks = proposals.div_ceil(chunk_size);
    let parts = run_streams(seed, chunks, |i, mut rng| {
        let todo = chunk_size.min(proposals - i * chunk_size);
        let mut out = SampleSet::empty(model.dim(), k, false);
        for _ in 0..todo {
            let theta = model.prior_sample(&mut rng);
            match model.simulate(&theta, sim_size, &mut rng) {
                Ok(raw) => {
                    let z: Vec<f64> = model
                        .summary_statistics(&raw)
                        .iter()
                        .zip(&observed)
                        .map(|(s, o)| s - o)
                        .collect();
                    let accepted = z.iter().zip(tolerances).all(|(v, t)| t.contains(*v));
                    out.record(&theta, &z, accepted);
                }
                Err(_) => {
                    out.failures += 1;
                    out.record(&theta, &vec![f64::NAN; k], false);
                }
            }
        }
        Ok(out)
    })?;
    if parts.is_empty() {
        return Ok(SampleSet::empty(model.dim(), k, false));
    }
    SampleSet::merge(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::NormalVarianceModel;
    use crate::numeric::RngStream;

    fn model() -> NormalVarianceModel {
        let mut rng = RngStream::new(21, 0);
        let x = NormalVarianceModel::pseudo_data(60, 1.0, &mut rng);
        NormalVarianceModel::new(x, Interval::new(0.2, 4.0).unwrap()).unwrap()
    }

    #[test]
    fn infinite_tolerance_accepts_the_prior() {
        let m = model();
        let t = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };
        let s = standard_abc_rejection(&m, &[t], 60, 5000, 1000, 1).unwrap();
        assert_eq!(s.accepted_count(), 5000);
        let mean = s.accepted_column(0).iter().sum::<f64>() / 5000.0;
        assert!((mean - 2.1).abs() < 0.1);
    }

    #[test]
    fn tolerances_must_straddle_zero() {
        let m = model();
        assert!(standard_abc_rejection(&m, &[Interval::new(0.1, 0.4).unwrap()], 60, 10, 10, 1).is_err());
    }

    #[test]
    fn narrower_tolerance_accepts_less() {
        let m = model();
        let wide = standard_abc_rejection(&m, &[Interval::new(-0.8, 0.8).unwrap()], 60, 50_000, 8192, 2).unwrap();
        let narrow = standard_abc_rejection(&m, &[Interval::new(-0.2, 0.2).unwrap()], 60, 50_000, 8192, 2).unwrap();
        assert!(narrow.acceptance_rate() < wide.acceptance_rate());
        assert!(narrow.accepted_column(0).len() == narrow.accepted_count());
    }
}
