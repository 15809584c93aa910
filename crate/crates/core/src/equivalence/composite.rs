//! Intersection of univariate tests: accept only if every test accepts.

use super::{EquivalenceError, EquivalenceTest};

/// `true` iff every test accepted. Errors on an empty list.
pub fn composite_accept(decisions: &[bool]) -> Result<bool, EquivalenceError> {
    if decisions.is_empty() {
        return Err(EquivalenceError::DimensionMismatch { expected: 1, got: 0 });
    }
    Ok(decisions.iter().all(|&d| d))
}

/// Product of the univariate powers at `rhos[k]`.
pub fn composite_power(rhos: &[f64], tests: &[EquivalenceTest]) -> Result<f64, EquivalenceError> {
    if rhos.len() != tests.len() {
        return Err(EquivalenceError::DimensionMismatch { expected: tests.len(), got: rhos.len() });
    }
    tests.iter().zip(rhos).try_fold(1.0, |acc, (t, &rho)| Ok(acc * t.power(rho)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equivalence::{Aux, ObservedStats, TestConfig, TestKind, ToleranceRegion};

    fn chi2_test() -> EquivalenceTest {
        let config = TestConfig {
            kind: TestKind::ChiSqDispersion,
            n: 60,
            m: 60,
            alpha: 0.01,
            tolerance: ToleranceRegion::new(0.477, 2.2, 1.0).unwrap(),
            aux: Aux::default(),
        };
        EquivalenceTest::new(config, ObservedStats::from_sum_of_squares(60, 60.0)).unwrap()
    }

    fn tosz_test() -> EquivalenceTest {
        let config = TestConfig {
            kind: TestKind::ToszCorrelation,
            n: 149,
            m: 278,
            alpha: 0.01,
            tolerance: ToleranceRegion::symmetric(0.0, 0.239).unwrap(),
            aux: Aux::default(),
        };
        EquivalenceTest::new(config, ObservedStats::from_fisher_z(149, 0.1)).unwrap()
    }

    #[test]
    fn accept_is_a_conjunction() {
        assert!(composite_accept(&[true, true]).unwrap());
        assert!(!composite_accept(&[true, false, true]).unwrap());
        assert!(composite_accept(&[]).is_err());
    }

    #[test]
    fn power_is_a_product() {
        let a = chi2_test();
        let b = tosz_test();
        let single = composite_power(&[1.0], std::slice::from_ref(&a)).unwrap();
        assert_eq!(single, a.power(1.0).unwrap());
        let both = composite_power(&[1.1, 0.05], &[a.clone(), b.clone()]).unwrap();
        assert!((both - a.power(1.1).unwrap() * b.power(0.05).unwrap()).abs() < 1e-15);
        let at_edge = composite_power(&[2.2, 0.0], &[a.clone(), b]).unwrap();
        assert!(at_edge <= 0.01 + 1e-9);
        assert!(composite_power(&[1.0, 0.0], &[a]).is_err());
    }
}
