//! Drive a full run from a TOML config, as the command line does.

use abcstar::config::ExperimentConfig;
use abcstar::pipeline::{accuracy, build_tests, calibrate_tests, run_sampler, ModelSetup};

const CONFIG: &str = r#"
seed = 21

[model]
kind = "normal"
n = 60
prior = [0.2, 4.0]

[sampler]
kind = "mcmc"
iterations = 20000
burn_in = 2000
annealing_factor = 2.0

[diagnostics]
kl_direction = "exact-to-abc"
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let setup = ModelSetup::from_config(&cfg.model, cfg.seed)?;
    let templates = setup.test_templates(cfg.calibration.alpha)?;
    let reports = calibrate_tests(&templates, &cfg.calibration, &cfg.tests)?;
    let tests = build_tests(&templates, &reports)?;
    let output = run_sampler(&setup, &tests, &cfg.sampler, cfg.seed)?;
    let report = accuracy(&setup, &output, &cfg.diagnostics, cfg.calibration.alpha, cfg.seed)?;
    print!("{}", toml::to_string(&report)?);
    Ok(())
}
