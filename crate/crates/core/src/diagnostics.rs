//! Accuracy metrics: KL divergence to an exact posterior, MAP estimates,
//! empirical test size and the true-positive lower bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::equivalence::{EquivalenceTest, PairSet, Summary, SummarySet, TestKind};
use crate::models::ExactPosterior;
use crate::numeric::{golden_section_max, Interval, NumericError, RngStream};
use crate::samplers::{run_streams, SamplerError};

pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Regular grid with `bins` cells per dimension, cells numbered row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub bounds: Vec<Interval>,
    pub bins: usize,
}

impl Binning {
    pub fn new(bounds: Vec<Interval>, bins: usize) -> Result<Self, DiagnosticsError> {
        if bounds.is_empty() || bins == 0 || bounds.iter().any(|b| !(b.hi > b.lo) || !b.width().is_finite()) {
            return Err(DiagnosticsError::Domain(format!("invalid binning {bounds:?} x {bins}")));
        }
        Ok(Self { bounds, bins })
    }

    /// The default 100 cells per dimension.
    pub fn standard(bounds: Vec<Interval>) -> Result<Self, DiagnosticsError> {
        Self::new(bounds, 100)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn cells(&self) -> usize {
        self.bins.pow(self.dim() as u32)
    }

    fn axis_index(&self, d: usize, v: f64) -> usize {
        let b = self.bounds[d];
        (((v - b.lo) / b.width()) * self.bins as f64).floor().clamp(0.0, (self.bins - 1) as f64) as usize
    }

    /// Cell of `theta`; points outside the bounds fall in the edge cells.
    pub fn index(&self, theta: &[f64]) -> usize {
        (0..self.dim()).fold(0, |acc, d| acc * self.bins + self.axis_index(d, theta[d]))
    }

    /// Lower and upper corners of a cell.
    pub fn cell(&self, index: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rest = index;
        let mut idx = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            idx[d] = rest % self.bins;
            rest /= self.bins;
        }
        let lo = (0..self.dim())
            .map(|d| self.bounds[d].lo + self.bounds[d].width() * idx[d] as f64 / self.bins as f64)
            .collect();
        let hi = (0..self.dim())
            .map(|d| self.bounds[d].lo + self.bounds[d].width() * (idx[d] + 1) as f64 / self.bins as f64)
            .collect();
        (lo, hi)
    }

    /// SHA-256 of the bounds and cell count, to check that two runs share
    /// the same grid.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.bins.to_le_bytes());
        for b in &self.bounds {
            h.update(b.lo.to_le_bytes());
            h.update(b.hi.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Exact posterior mass of every cell.
pub fn exact_bin_masses<P: ExactPosterior + ?Sized>(
    posterior: &P,
    binning: &Binning,
) -> Result<Vec<f64>, DiagnosticsError> {
    let masses = (0..binning.cells())
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = binning.cell(i);
            posterior.box_mass(&lo, &hi)
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(masses)
}

/// Which way round the KL divergence is taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    /// `KL(exact || abc)`.
    #[default]
    ExactToAbc,
    /// `KL(abc || exact)`.
    AbcToExact,
}

/// Sample counts per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<f64>,
    pub samples: usize,
}

impl Histogram {
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.samples as f64;
        self.counts.iter().map(|c| c / n).collect()
    }

    /// Frequencies with empty cells raised to `0.5 / N`, renormalized.
    pub fn floored(&self) -> Vec<f64> {
        let floor = 0.5;
        let total: f64 = self.counts.iter().map(|c| c.max(floor)).sum();
        self.counts.iter().map(|c| c.max(floor) / total).collect()
    }
}

pub fn sample_histogram(samples: &[Vec<f64>], binning: &Binning) -> Result<Histogram, DiagnosticsError> {
    if samples.len() < MIN_SAMPLES {
        return Err(DiagnosticsError::InsufficientSamples { need: MIN_SAMPLES, got: samples.len() });
    }
    let mut counts = vec![0.0; binning.cells()];
    for s in samples {
        counts[binning.index(s)] += 1.0;
    }
    Ok(Histogram { counts, samples: samples.len() })
}

/// KL divergence between exact cell masses and a sample histogram. The
/// empty-cell floor is applied only when the histogram is the reference
/// measure, where an empty cell would make the divergence infinite.
pub fn kl_from_masses(exact: &[f64], histogram: &Histogram, direction: KlDirection) -> f64 {
    let hist = match direction {
        KlDirection::ExactToAbc => histogram.floored(),
        KlDirection::AbcToExact => histogram.frequencies(),
    };
    let (p, q) = match direction {
        KlDirection::ExactToAbc => (exact, hist.as_slice()),
        KlDirection::AbcToExact => (hist.as_slice(), exact),
    };
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi.max(1e-300)).ln())
        .sum::<f64>()
        .max(0.0)
}

/// KL between the exact posterior and a histogram of the samples.
pub fn kl_from_samples<P: ExactPosterior + ?Sized>(
    samples: &[Vec<f64>],
    posterior: &P,
    binning: &Binning,
    direction: KlDirection,
) -> Result<f64, DiagnosticsError> {
    let exact = exact_bin_masses(posterior, binning)?;
    Ok(kl_from_masses(&exact, &sample_histogram(samples, binning)?, direction))
}

/// `n` draws from the piecewise-uniform density with the given cell masses.
pub fn sample_binned(masses: &[f64], binning: &Binning, n: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let mut cdf = Vec::with_capacity(masses.len());
    let mut acc = 0.0;
    for m in masses {
        acc += m.max(0.0);
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let u = rng.uniform() * acc;
            let cell = cdf.partition_point(|c| *c <= u).min(masses.len() - 1);
            let (lo, hi) = binning.cell(cell);
            lo.iter().zip(&hi).map(|(l, h)| rng.uniform_in(*l, *h)).collect()
        })
        .collect()
}

/// Mode estimate with the bandwidths used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEstimate {
    pub theta: Vec<f64>,
    pub bandwidth: Vec<f64>,
    pub rule: String,
}

fn scott_bandwidth(values: &[f64], dim: usize) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    sd * n.powf(-1.0 / (dim as f64 + 4.0))
}

fn gaussian_smooth(grid: &[f64], width: usize, height: usize, h_cells: (f64, f64)) -> Vec<f64> {
    let kernel = |h: f64| -> Vec<f64> {
        if h <= 0.0 {
            return vec![1.0];
        }
        let r = (4.0 * h).ceil() as i64;
        (-r..=r).map(|k| (-0.5 * (k as f64 / h).powi(2)).exp()).collect()
    };
    let convolve = |data: &[f64], len: usize, stride: usize, count: usize, outer: usize, k: &[f64]| {
        let r = (k.len() / 2) as i64;
        let mut out = vec![0.0; data.len()];
        for o in 0..count {
            let base = o * outer;
            for i in 0..len {
                let mut acc = 0.0;
                for (j, w) in k.iter().enumerate() {
                    let src = i as i64 + j as i64 - r;
                    if src >= 0 && (src as usize) < len {
                        acc += w * data[base + src as usize * stride];
                    }
                }
                out[base + i * stride] = acc;
            }
        }
        out
    };
    let rows = convolve(grid, width, 1, height, width, &kernel(h_cells.0));
    if height == 1 {
        return rows;
    }
    convolve(&rows, height, width, width, 1, &kernel(h_cells.1))
}

/// Mode of a Gaussian kernel density estimate with Scott's bandwidth. The
/// density is binned on a fine grid over `bounds`, the best cell is located,
/// then refined by maximizing the exact estimate along each axis.
pub fn map_from_samples(samples: &[Vec<f64>], bounds: &[Interval]) -> Result<MapEstimate, DiagnosticsError> {
    if samples.len() < MIN_SAMPLES {
        return Err(DiagnosticsError::InsufficientSamples { need: MIN_SAMPLES, got: samples.len() });
    }
    let dim = bounds.len();
    if !(1..=2).contains(&dim) || samples.iter().any(|s| s.len() != dim) {
        return Err(DiagnosticsError::Domain(format!("MAP supports 1 or 2 dimensions, got {dim}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    let columns: Vec<Vec<f64>> = (0..dim).map(|d| sorted.iter().map(|s| s[d]).collect()).collect();
    let h: Vec<f64> = columns.iter().map(|c| scott_bandwidth(c, dim)).collect();
    let rule = "scott".to_string();
    let degenerate = columns.iter().any(|c| c.iter().all(|v| *v == c[0]));
    if degenerate || h.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return Ok(MapEstimate { theta: sorted[0].clone(), bandwidth: h, rule });
    }

    let cells = if dim == 1 { 4096 } else { 256 };
    let binning = Binning::new(bounds.to_vec(), cells)?;
    let mut grid = vec![0.0; binning.cells()];
    for s in &sorted {
        grid[binning.index(s)] += 1.0;
    }
    let h_cells: Vec<f64> =
        (0..dim).map(|d| h[d] / (bounds[d].width() / cells as f64)).collect();
    let smoothed = if dim == 1 {
        gaussian_smooth(&grid, cells, 1, (h_cells[0], 0.0))
    } else {
        gaussian_smooth(&grid, cells, cells, (h_cells[1], h_cells[0]))
    };
    let best = smoothed
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("grid is not empty");
    let (lo, hi) = binning.cell(best);
    let mut theta: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| 0.5 * (l + u)).collect();

    let kde = |t: &[f64]| -> f64 {
        sorted
            .iter()
            .map(|s| {
                let q: f64 = (0..dim).map(|d| ((s[d] - t[d]) / h[d]).powi(2)).sum();
                (-0.5 * q).exp()
            })
            .sum()
    };
    for _ in 0..2 {
        for d in 0..dim {
            let cell = bounds[d].width() / cells as f64;
            let (a, b) = (theta[d] - 2.0 * cell, theta[d] + 2.0 * cell);
            let (x, _) = golden_section_max(
                |v| {
                    let mut t = theta.clone();
                    t[d] = v;
                    kde(&t)
                },
                a,
                b,
                1e-6 * cell,
            );
            theta[d] = x;
        }
    }
    Ok(MapEstimate { theta, bandwidth: h, rule })
}

/// `max(0, 1 - α / P(R))`: lower bound on the probability that an accepted
/// draw is a true positive.
pub fn tp_lower_bound(alpha: f64, acceptance_prob: f64) -> Result<f64, DiagnosticsError> {
    if !(acceptance_prob > 0.0 && acceptance_prob <= 1.0) {
        return Err(DiagnosticsError::Domain(format!(
            "acceptance probability must be in (0, 1], got {acceptance_prob}"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DiagnosticsError::Domain(format!("alpha must be in [0, 1], got {alpha}")));
    }
    Ok((1.0 - alpha / acceptance_prob).max(0.0))
}

/// A simulated summary set of the size the test expects, drawn so that the
/// test's discrepancy equals `rho`.
pub fn simulate_at_rho(test: &EquivalenceTest, rho: f64, rng: &mut RngStream) -> Summary {
    let m = test.config.m;
    let obs = &test.observed;
    match test.config.kind {
        TestKind::ChiSqDispersion => {
            let sd = (rho * obs.sum_of_squares / test.config.n as f64).sqrt();
            Summary::Values(SummarySet::new((0..m).map(|_| sd * rng.std_normal()).collect()))
        }
        TestKind::TostLocation => {
            let sd = test.config.aux.sigma_hat.unwrap_or(obs.sd);
            Summary::Values(SummarySet::new((0..m).map(|_| obs.mean + rho + sd * rng.std_normal()).collect()))
        }
        TestKind::ToszCorrelation => {
            let r = (rho + obs.fisher_z).tanh();
            let c = (1.0 - r * r).sqrt();
            Summary::Pairs(PairSet::new(
                (0..m)
                    .map(|_| {
                        let u = rng.std_normal();
                        (u, r * u + c * rng.std_normal())
                    })
                    .collect(),
            ))
        }
    }
}

/// Monte Carlo probability that the test accepts (rejects its
/// non-equivalence null) when the discrepancy is `rho`. Uses `reps / 1000`
/// rounded up independent streams of `seed`.
pub fn empirical_size(test: &EquivalenceTest, rho: f64, reps: usize, seed: u64) -> Result<f64, DiagnosticsError> {
    if reps == 0 {
        return Err(DiagnosticsError::Domain("need at least one replicate".into()));
    }
    let chunk = 1000;
    let counts = run_streams(seed, reps.div_ceil(chunk), |i, mut rng| {
        let todo = chunk.min(reps - i * chunk);
        Ok((0..todo).filter(|_| test.decide(&simulate_at_rho(test, rho, &mut rng)).accepted).count())
    })?;
    Ok(counts.iter().sum::<usize>() as f64 / reps as f64)
}

/// Smallest cell mass inside the highest-density region of probability
/// `level`.
pub fn hpd_threshold(masses: &[f64], level: f64) -> f64 {
    let mut sorted: Vec<f64> = masses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    let mut acc = 0.0;
    for m in &sorted {
        acc += m;
        if acc >= level * total {
            return *m;
        }
    }
    0.0
}

/// Whether `theta` lies in a cell of the highest-density region.
pub fn in_hpd(masses: &[f64], binning: &Binning, theta: &[f64], level: f64) -> bool {
    masses[binning.index(theta)] >= hpd_threshold(masses, level)
}

/// Accuracy of one ABC run against an exact posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// KL in the configured direction.
    pub kl_divergence: f64,
    pub kl_direction: KlDirection,
    /// KL in the other direction.
    pub kl_other_direction: f64,
    /// KL of exact draws of the same count, in the configured direction.
    pub kl_floor: f64,
    pub map_estimate: Vec<f64>,
    pub exact_map: Vec<f64>,
    pub map_squared_error: f64,
    pub map_bandwidth: Vec<f64>,
    pub acceptance_rate: f64,
    pub accepted: usize,
    pub tp_lower_bound: f64,
    pub binning_hash: String,
}

/// Inputs of [`accuracy_report`] besides the samples.
pub struct AccuracyInputs<'a, P: ExactPosterior + ?Sized> {
    pub posterior: &'a P,
    pub binning: &'a Binning,
    pub exact_masses: &'a [f64],
    pub direction: KlDirection,
    pub acceptance_rate: f64,
    pub alpha: f64,
    pub seed: u64,
}

pub fn accuracy_report<P: ExactPosterior + ?Sized>(
    samples: &[Vec<f64>],
    inputs: &AccuracyInputs<'_, P>,
) -> Result<AccuracyReport, DiagnosticsError> {
    let hist = sample_histogram(samples, inputs.binning)?;
    let other = match inputs.direction {
        KlDirection::ExactToAbc => KlDirection::AbcToExact,
        KlDirection::AbcToExact => KlDirection::ExactToAbc,
    };
    let mut rng = RngStream::new(inputs.seed, u64::MAX);
    let exact_draws = sample_binned(inputs.exact_masses, inputs.binning, samples.len(), &mut rng);
    let floor_hist = sample_histogram(&exact_draws, inputs.binning)?;
    let map = map_from_samples(samples, &inputs.binning.bounds)?;
    let exact_map = inputs.posterior.map();
    let se = map.theta.iter().zip(&exact_map).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(AccuracyReport {
        kl_divergence: kl_from_masses(inputs.exact_masses, &hist, inputs.direction),
        kl_direction: inputs.direction,
        kl_other_direction: kl_from_masses(inputs.exact_masses, &hist, other),
        kl_floor: kl_from_masses(inputs.exact_masses, &floor_hist, inputs.direction),
        map_estimate: map.theta,
        exact_map,
        map_squared_error: se,
        map_bandwidth: map.bandwidth,
        acceptance_rate: inputs.acceptance_rate,
        accepted: samples.len(),
        tp_lower_bound: tp_lower_bound(inputs.alpha, inputs.acceptance_rate.max(f64::MIN_POSITIVE))?,
        binning_hash: inputs.binning.hash(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equivalence::{Aux, ObservedStats, TestConfig, ToleranceRegion};
    use crate::models::{NormalPosterior, NormalVarianceModel};

    fn posterior() -> NormalPosterior {
        let mut rng = RngStream::new(1, 0);
        let x = NormalVarianceModel::pseudo_data(60, 1.0, &mut rng);
        NormalVarianceModel::new(x, Interval { lo: 0.2, hi: 4.0 }).unwrap().exact_posterior().unwrap()
    }

    #[test]
    fn tp_bound_examples() {
        assert_eq!(tp_lower_bound(0.01, 0.02).unwrap(), 0.5);
        assert!((tp_lower_bound(0.01, 1.0).unwrap() - 0.99).abs() < 1e-15);
        assert_eq!(tp_lower_bound(0.05, 0.04).unwrap(), 0.0);
        assert!(tp_lower_bound(0.01, 0.0).is_err());
    }

    #[test]
    fn binning_round_trips_cells() {
        let b = Binning::new(vec![Interval { lo: 0.0, hi: 1.0 }, Interval { lo: -1.0, hi: 1.0 }], 10).unwrap();
        assert_eq!(b.cells(), 100);
        let (lo, hi) = b.cell(b.index(&[0.55, -0.05]));
        assert!(lo[0] <= 0.55 && hi[0] > 0.55 && lo[1] <= -0.05 && hi[1] > -0.05);
        assert_eq!(b.hash(), b.clone().hash());
        assert_ne!(b.hash(), Binning::new(b.bounds.clone(), 11).unwrap().hash());
    }

    #[test]
    fn exact_draws_give_a_small_kl() {
        let p = posterior();
        let mut rng = RngStream::new(2, 0);
        let draws: Vec<Vec<f64>> = (0..100_000).map(|_| vec![p.sample(&mut rng)]).collect();
        let b = Binning::standard(vec![p.support]).unwrap();
        let masses = exact_bin_masses(&p, &b).unwrap();
        assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let kl = kl_from_masses(&masses, &sample_histogram(&draws, &b).unwrap(), KlDirection::ExactToAbc);
        assert!((0.0..0.02).contains(&kl), "{kl}");
        assert!(sample_histogram(&draws[..10], &b).is_err());
    }

    #[test]
    fn map_of_simple_samples() {
        let atom = vec![vec![0.7]; 2000];
        assert_eq!(map_from_samples(&atom, &[Interval { lo: 0.0, hi: 1.0 }]).unwrap().theta, vec![0.7]);
        let mut rng = RngStream::new(3, 0);
        let draws: Vec<Vec<f64>> = (0..100_000).map(|_| vec![rng.normal(1.3, 0.1)]).collect();
        let est = map_from_samples(&draws, &[Interval { lo: 0.5, hi: 2.0 }]).unwrap();
        assert!((est.theta[0] - 1.3).abs() < 0.01, "{:?}", est.theta);
        let mut reversed = draws.clone();
        reversed.reverse();
        assert_eq!(map_from_samples(&reversed, &[Interval { lo: 0.5, hi: 2.0 }]).unwrap(), est);
        let pairs: Vec<Vec<f64>> = (0..50_000).map(|_| vec![rng.normal(0.1, 0.05), rng.normal(1.0, 0.1)]).collect();
        let est2 = map_from_samples(&pairs, &[Interval { lo: -0.5, hi: 0.5 }, Interval { lo: 0.3, hi: 2.0 }]).unwrap();
        assert!((est2.theta[0] - 0.1).abs() < 0.01 && (est2.theta[1] - 1.0).abs() < 0.02, "{:?}", est2.theta);
    }

    #[test]
    fn hpd_contains_the_mode_and_excludes_the_tail() {
        let p = posterior();
        let b = Binning::standard(vec![p.support]).unwrap();
        let masses = exact_bin_masses(&p, &b).unwrap();
        assert!(in_hpd(&masses, &b, &[1.0], 0.95));
        assert!(!in_hpd(&masses, &b, &[3.5], 0.95));
    }

    #[test]
    fn empirical_size_at_the_boundaries() {
        let cfg = TestConfig {
            kind: TestKind::ChiSqDispersion,
            n: 60,
            m: 108,
            alpha: 0.01,
            tolerance: ToleranceRegion::new(0.589, 1.752, 1.0).unwrap(),
            aux: Aux::default(),
        };
        let test = EquivalenceTest::new(cfg, ObservedStats::from_sum_of_squares(60, 60.0)).unwrap();
        let reps = 100_000;
        let se = (0.01 * 0.99 / reps as f64).sqrt();
        for rho in [0.589, 1.752] {
            let size = empirical_size(&test, rho, reps, 4).unwrap();
            assert!((size - 0.01).abs() < 3.0 * se, "rho {rho}: {size}");
        }
        assert!(empirical_size(&test, 3.0, 20_000, 5).unwrap() < 0.01);
    }
}
