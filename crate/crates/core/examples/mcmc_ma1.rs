//! ABC* MCMC for an MA(1) series, with tolerances widened during burn-in
//! and shrunk to their calibrated values.

use abcstar::config::{CalibrationConfig, Ma1Config, ModelConfig, SamplerConfig, SamplerKind};
use abcstar::pipeline::{build_tests, calibrate_tests, run_sampler, ModelSetup, RunOutput};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 5;
    let setup = ModelSetup::from_config(&ModelConfig::Ma1(Ma1Config::default()), seed)?;
    let cal = CalibrationConfig::default();
    let templates = setup.test_templates(cal.alpha)?;
    let reports = calibrate_tests(&templates, &cal, &[])?;
    for r in &reports {
        println!("{}: m={} tau=[{:.4}, {:.4}]", r.kind.name(), r.m, r.tau_minus, r.tau_plus);
    }
    let tests = build_tests(&templates, &reports)?;

    let cfg = SamplerConfig {
        kind: SamplerKind::Mcmc,
        iterations: 20_000,
        burn_in: 2_000,
        chains: 2,
        annealing_factor: Some(3.0),
        ..Default::default()
    };
    let RunOutput::Chains(chains) = run_sampler(&setup, &tests, &cfg, seed)? else { unreachable!() };
    for (i, c) in chains.iter().enumerate() {
        let a = c.kept_column(0);
        let s2 = c.kept_column(1);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "chain {i}: burn-in {}  move acceptance {:.3}  mean a {:.3}  mean sigma2 {:.3}",
            c.burn_in,
            c.acceptance_rate(),
            mean(&a),
            mean(&s2)
        );
    }
    Ok(())
}
