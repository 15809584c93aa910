//! Accuracy diagnostics: empirical size at the tolerance boundaries, the
//! true-positive bound and the KL estimator's floor.

use abcstar::calibration::{calibrate_m, CalibrationSettings};
use abcstar::diagnostics::{empirical_size, sample_binned, sample_histogram, kl_from_masses, tp_lower_bound, Binning, KlDirection};
use abcstar::equivalence::{Aux, EquivalenceTest, ObservedStats, TestConfig, TestKind, ToleranceRegion};
use abcstar::models::{NormalPosterior, ExactPosterior};
use abcstar::numeric::{Interval, RngStream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 60;
    let observed = ObservedStats::from_sum_of_squares(n, n as f64);
    let template = TestConfig {
        kind: TestKind::ChiSqDispersion,
        n,
        m: n,
        alpha: 0.01,
        tolerance: ToleranceRegion::new(0.5, 2.0, 1.0)?,
        aux: Aux::default(),
    };
    let support = Interval::new(0.2, 4.0)?;
    let report = calibrate_m(&template, &observed, &CalibrationSettings::default().with_rho_support(support))?;
    let test = EquivalenceTest::new(report.config(), observed)?;

    for rho in [report.tau_minus, report.tau_plus] {
        let size = empirical_size(&test, rho, 100_000, 1)?;
        println!("acceptance at rho={rho:.4}: {size:.4} (alpha {})", report.alpha);
    }
    for p in [0.02, 0.05, 0.13, 0.5] {
        println!("acceptance {p:<4} -> true-positive rate >= {:.3}", tp_lower_bound(0.01, p)?);
    }

    // KL of exact draws against the exact masses: the estimator's floor.
    let posterior = NormalPosterior::new(n, n as f64, support)?;
    let binning = Binning::standard(posterior.bounds())?;
    let masses = abcstar::diagnostics::exact_bin_masses(&posterior, &binning)?;
    let mut rng = RngStream::new(2, 0);
    for draws in [1_000, 10_000, 100_000] {
        let sample = sample_binned(&masses, &binning, draws, &mut rng);
        let kl = kl_from_masses(&masses, &sample_histogram(&sample, &binning)?, KlDirection::ExactToAbc);
        println!("{draws:>7} exact draws: KL {kl:.5}");
    }
    Ok(())
}
