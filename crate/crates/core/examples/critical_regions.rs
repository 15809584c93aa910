//! Critical regions and analytic power of the three equivalence tests.

use abcstar::equivalence::{
    chi2_critical_region, tost_critical_region, tosz_critical_region, Aux, TestConfig, TestKind, ToleranceRegion,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let alpha = 0.01;

    // Variance ratio: n = 60 observed values against m simulated ones.
    for (m, lo, hi) in [(60, 0.35, 1.65), (60, 0.477, 2.2), (108, 0.589, 1.752)] {
        let r = chi2_critical_region(60, m, alpha, &ToleranceRegion::new(lo, hi, 1.0)?)?;
        println!("chi2  m={m:<3} tau=[{lo}, {hi}]  accept T in [{:.4}, {:.4}]", r.c_minus, r.c_plus);
    }

    // Location: accept when the simulated mean is within the tolerance.
    let tol = ToleranceRegion::symmetric(0.0, 0.5)?;
    let r = tost_critical_region(100, 1.0, alpha, &tol)?;
    println!("tost  m=100 tau=[-0.5, 0.5]  accept mean diff in [{:.4}, {:.4}]", r.c_minus, r.c_plus);

    // Correlation on the Fisher z scale.
    let tol = ToleranceRegion::symmetric(0.0, 0.3)?;
    let r = tosz_critical_region(150, alpha, &tol)?;
    println!("tosz  n=150 tau=[-0.3, 0.3]  accept z diff in [{:.4}, {:.4}]", r.c_minus, r.c_plus);

    // Power of the variance test across rho.
    let cfg = TestConfig {
        kind: TestKind::ChiSqDispersion,
        n: 60,
        m: 108,
        alpha,
        tolerance: ToleranceRegion::new(0.589, 1.752, 1.0)?,
        aux: Aux::default(),
    };
    let region = cfg.critical_region()?;
    println!("\nchi2 power, m=108:");
    for rho in [0.5, 0.589, 0.8, 1.0, 1.2, 1.5, 1.752, 2.0] {
        println!("  rho={rho:<5}  power={:.4}", cfg.power(rho, &region)?);
    }
    Ok(())
}
