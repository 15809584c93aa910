//! Calibrate the variance test of the normal example: choose `m` and the
//! tolerances so the power matches the summary likelihood.

use abcstar::calibration::{calibrate_at_m, calibrate_m, CalibrationSettings};
use abcstar::equivalence::{Aux, ObservedStats, TestConfig, TestKind, ToleranceRegion};
use abcstar::numeric::Interval;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 60;
    let template = TestConfig {
        kind: TestKind::ChiSqDispersion,
        n,
        m: n,
        alpha: 0.01,
        tolerance: ToleranceRegion::new(0.5, 2.0, 1.0)?,
        aux: Aux::default(),
    };
    // Data with S²(x)/n = 1 and a uniform prior on [0.2, 4] for σ².
    let observed = ObservedStats::from_sum_of_squares(n, n as f64);
    let settings = CalibrationSettings::default().with_rho_support(Interval::new(0.2, 4.0)?);

    println!("fixed m:");
    for m in [60, 80, 100, 120, 140] {
        let fit = calibrate_at_m(&template, m, &observed, &settings)?;
        println!(
            "  m={m:<3} tau=[{:.4}, {:.4}]  KL(power || likelihood)={:+.5}",
            fit.tau_minus, fit.tau_plus, fit.kl
        );
    }

    let report = calibrate_m(&template, &observed, &settings)?;
    println!(
        "\ncalibrated: m={} tau=[{:.4}, {:.4}] c=[{:.4}, {:.4}] power at rho*={:.3} converged={}",
        report.m,
        report.tau_minus,
        report.tau_plus,
        report.critical.c_minus,
        report.critical.c_plus,
        report.power_at_rho_star,
        report.converged
    );
    Ok(())
}
