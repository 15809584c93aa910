//! ABC* rejection sampling for the variance of normal data, scored against
//! the analytic posterior.

use abcstar::config::{CalibrationConfig, ModelConfig, NormalConfig, SamplerConfig};
use abcstar::diagnostics::KlDirection;
use abcstar::pipeline::{build_tests, calibrate_tests, run_sampler, ModelSetup, Reference};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 11;
    let setup = ModelSetup::from_config(&ModelConfig::Normal(NormalConfig::default()), seed)?;
    let cal = CalibrationConfig::default();
    let templates = setup.test_templates(cal.alpha)?;
    let reports = calibrate_tests(&templates, &cal, &[])?;
    let tests = build_tests(&templates, &reports)?;
    println!("m={} tau=[{:.4}, {:.4}]", reports[0].m, reports[0].tau_minus, reports[0].tau_plus);

    let sampler = SamplerConfig { iterations: 200_000, ..Default::default() };
    let run = run_sampler(&setup, &tests, &sampler, seed)?;
    let draws = run.posterior_draws();
    println!("accepted {} of {} ({:.2}%)", draws.len(), sampler.iterations, 100.0 * run.acceptance_rate());

    let reference = Reference::new(&setup, 100)?;
    let report = reference.score(&draws, run.acceptance_rate(), cal.alpha, KlDirection::ExactToAbc, seed)?;
    println!("KL(exact || abc) = {:.4}  (exact draws of the same size: {:.4})", report.kl_divergence, report.kl_floor);
    println!("MAP {:.4}, exact MAP {:.4}", report.map_estimate[0], report.exact_map[0]);
    println!("true-positive rate >= {:.3}", report.tp_lower_bound);
    Ok(())
}
