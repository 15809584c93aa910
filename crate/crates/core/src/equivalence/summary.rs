//! Summary values: scalar sets for variance and location tests, pair sets
//! for correlation tests.

use serde::{Deserialize, Serialize};

/// An ordered collection of scalar summary values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySet {
    pub values: Vec<f64>,
}

impl SummarySet {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.count() as f64
    }

    /// Centered sum of squares `sum (v - mean)^2`.
    pub fn sum_of_squares(&self) -> f64 {
        let mean = self.mean();
        self.values.iter().map(|v| (v - mean) * (v - mean)).sum()
    }

    /// Sample standard deviation with divisor `count - 1`.
    pub fn sd(&self) -> f64 {
        (self.sum_of_squares() / (self.count() as f64 - 1.0)).sqrt()
    }
}

/// Pairs `(u_i, v_i)` whose Pearson correlation is the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<(f64, f64)>,
}

impl PairSet {
    pub fn new(pairs: Vec<(f64, f64)>) -> Self {
        Self { pairs }
    }

    /// Consecutive pairs `(x_t, x_{t+1})` taken at the given starting
    /// indices.
    pub fn from_series(series: &[f64], starts: impl IntoIterator<Item = usize>) -> Self {
        Self {
            pairs: starts
                .into_iter()
                .filter(|&i| i + 1 < series.len())
                .map(|i| (series[i], series[i + 1]))
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.pairs.len()
    }

    /// Sample Pearson correlation. NaN when either margin has zero variance.
    pub fn pearson(&self) -> f64 {
        let n = self.count() as f64;
        let (mu, mv) = self
            .pairs
            .iter()
            .fold((0.0, 0.0), |(a, b), (u, v)| (a + u, b + v));
        let (mu, mv) = (mu / n, mv / n);
        let (mut suu, mut svv, mut suv) = (0.0, 0.0, 0.0);
        for (u, v) in &self.pairs {
            let (du, dv) = (u - mu, v - mv);
            suu += du * du;
            svv += dv * dv;
            suv += du * dv;
        }
        if suu == 0.0 || svv == 0.0 {
            return f64::NAN;
        }
        suv / (suu * svv).sqrt()
    }
}

/// One summary set as consumed by a single equivalence test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Summary {
    Values(SummarySet),
    Pairs(PairSet),
}

impl Summary {
    pub fn count(&self) -> usize {
        match self {
            Summary::Values(s) => s.count(),
            Summary::Pairs(p) => p.count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_a_small_set() {
        let s = SummarySet::new(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.count(), 4);
        assert_eq!(s.mean(), 2.5);
        assert_eq!(s.sum_of_squares(), 5.0);
        assert!((s.sd() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pearson_of_linear_pairs() {
        let p = PairSet::new((0..10).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect());
        assert!((p.pearson() + 1.0).abs() < 1e-15);
        let flat = PairSet::new(vec![(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)]);
        assert!(flat.pearson().is_nan());
    }

    #[test]
    fn series_pairs_respect_bounds() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let p = PairSet::from_series(&x, (0..5).step_by(2));
        assert_eq!(p.pairs, vec![(0.0, 1.0), (2.0, 3.0)]);
    }
}
