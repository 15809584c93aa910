//! Power curves of the calibrated MA(1) tests, written as CSV to stdout.

use abcstar::config::{CalibrationConfig, Ma1Config, ModelConfig};
use abcstar::io::write_power_curve;
use abcstar::pipeline::{build_tests, calibrate_tests, ModelSetup};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = ModelSetup::from_config(&ModelConfig::Ma1(Ma1Config::default()), 1)?;
    let cal = CalibrationConfig::default();
    let templates = setup.test_templates(cal.alpha)?;
    let reports = calibrate_tests(&templates, &cal, &[])?;
    let tests = build_tests(&templates, &reports)?;
    let mut rows = Vec::new();
    for (i, (test, t)) in tests.iter().zip(&templates).enumerate() {
        for rho in t.rho_support.linspace(41) {
            rows.push((i + 1, rho, test.power(rho)?));
        }
    }
    write_power_curve(std::io::stdout().lock(), &rows, "example = \"power_curve\"")?;
    Ok(())
}
