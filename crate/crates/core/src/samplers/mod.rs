//! ABC* rejection and MCMC samplers plus the standard ABC baseline.

pub mod mcmc;
pub mod proposal;
pub mod rejection;
pub mod standard;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equivalence::{EquivalenceError, EquivalenceTest};
use crate::models::ModelError;
use crate::numeric::{NumericError, RngStream};

pub use mcmc::{abc_star_mcmc, metropolis_hastings, AnnealingSchedule, McmcSettings};
pub use proposal::ProposalSpec;
pub use rejection::{abc_star_rejection, RejectionSettings};
pub use standard::standard_abc_rejection;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Equivalence(#[from] EquivalenceError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("proposal: {0}")]
    Proposal(String),
    #[error("initialization failed: {0}")]
    Init(String),
    #[error("invalid sampler configuration: {0}")]
    Config(String),
}

/// Draws of a rejection sampler stored row-major: row `i` has `dim` theta
/// components and `k` statistics.
///
/// With `keep_rejected = false` only accepted rows are kept; `proposals`
/// still counts every draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub dim: usize,
    pub k: usize,
    pub thetas: Vec<f64>,
    pub zs: Vec<f64>,
    pub accepted: Vec<bool>,
    pub proposals: usize,
    /// Draws whose simulation failed; counted as rejections.
    pub failures: usize,
    pub keep_rejected: bool,
}

impl SampleSet {
    pub fn empty(dim: usize, k: usize, keep_rejected: bool) -> Self {
        Self {
            dim,
            k,
            thetas: Vec::new(),
            zs: Vec::new(),
            accepted: Vec::new(),
            proposals: 0,
            failures: 0,
            keep_rejected,
        }
    }

    pub(crate) fn record(&mut self, theta: &[f64], z: &[f64], accepted: bool) {
        self.proposals += 1;
        if accepted || self.keep_rejected {
            self.thetas.extend_from_slice(theta);
            self.zs.extend_from_slice(z);
            self.accepted.push(accepted);
        }
    }

    /// Rows stored (all proposals, or accepted ones only).
    pub fn rows(&self) -> usize {
        self.accepted.len()
    }

    pub fn theta(&self, row: usize) -> &[f64] {
        &self.thetas[row * self.dim..(row + 1) * self.dim]
    }

    pub fn z(&self, row: usize) -> &[f64] {
        &self.zs[row * self.k..(row + 1) * self.k]
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted.iter().filter(|a| **a).count()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            return 0.0;
        }
        self.accepted_count() as f64 / self.proposals as f64
    }

    /// Accepted theta vectors in draw order.
    pub fn accepted_thetas(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .filter(|&r| self.accepted[r])
            .map(|r| self.theta(r).to_vec())
            .collect()
    }

    /// Component `j` of every accepted theta.
    pub fn accepted_column(&self, j: usize) -> Vec<f64> {
        (0..self.rows()).filter(|&r| self.accepted[r]).map(|r| self.theta(r)[j]).collect()
    }

    /// Concatenate chunks in order.
    pub fn merge(parts: Vec<SampleSet>) -> Result<SampleSet, SamplerError> {
        let mut iter = parts.into_iter();
        let mut out = iter
            .next()
            .ok_or_else(|| SamplerError::Config("nothing to merge".into()))?;
        for p in iter {
            if p.dim != out.dim || p.k != out.k || p.keep_rejected != out.keep_rejected {
                return Err(SamplerError::Config("merging incompatible sample sets".into()));
            }
            out.thetas.extend(p.thetas);
            out.zs.extend(p.zs);
            out.accepted.extend(p.accepted);
            out.proposals += p.proposals;
            out.failures += p.failures;
        }
        Ok(out)
    }
}

/// Ordered MCMC states, row-major like [`SampleSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub dim: usize,
    pub k: usize,
    pub thetas: Vec<f64>,
    pub zs: Vec<f64>,
    pub proposal_covariance: Vec<Vec<f64>>,
    pub burn_in: usize,
    pub annealing_schedule: String,
    /// Accepted moves and proposed moves after burn-in.
    pub moves_accepted: usize,
    pub moves_proposed: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.thetas.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.thetas[i * self.dim..(i + 1) * self.dim]
    }

    pub fn z(&self, i: usize) -> &[f64] {
        &self.zs[i * self.k..(i + 1) * self.k]
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.moves_proposed == 0 {
            return 0.0;
        }
        self.moves_accepted as f64 / self.moves_proposed as f64
    }

    /// States after burn-in.
    pub fn kept_thetas(&self) -> Vec<Vec<f64>> {
        (self.burn_in..self.len()).map(|i| self.theta(i).to_vec()).collect()
    }

    pub fn kept_column(&self, j: usize) -> Vec<f64> {
        (self.burn_in..self.len()).map(|i| self.theta(i)[j]).collect()
    }

    /// Post-burn-in states of several chains, concatenated in order.
    pub fn merge(chains: &[Chain]) -> Result<Chain, SamplerError> {
        let first = chains.first().ok_or_else(|| SamplerError::Config("nothing to merge".into()))?;
        let mut out = Chain {
            dim: first.dim,
            k: first.k,
            thetas: Vec::new(),
            zs: Vec::new(),
            proposal_covariance: first.proposal_covariance.clone(),
            burn_in: 0,
            annealing_schedule: first.annealing_schedule.clone(),
            moves_accepted: 0,
            moves_proposed: 0,
        };
        for c in chains {
            if c.dim != out.dim || c.k != out.k {
                return Err(SamplerError::Config("merging incompatible chains".into()));
            }
            out.thetas.extend_from_slice(&c.thetas[c.burn_in * c.dim..]);
            out.zs.extend_from_slice(&c.zs[c.burn_in * c.k..]);
            out.moves_accepted += c.moves_accepted;
            out.moves_proposed += c.moves_proposed;
        }
        Ok(out)
    }
}

/// Run `count` independent jobs on streams `0..count` of `seed` and return
/// the results in stream order, whatever the thread count.
pub fn run_streams<T, F>(seed: u64, count: usize, job: F) -> Result<Vec<T>, SamplerError>
where
    T: Send,
    F: Fn(usize, RngStream) -> Result<T, SamplerError> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| job(i, RngStream::new(seed, i as u64)))
        .collect()
}

/// Decide every test against its summary set; returns `(z, all accepted)`.
pub(crate) fn decide_all(
    tests: &[EquivalenceTest],
    summaries: &[crate::equivalence::Summary],
) -> (Vec<f64>, bool) {
    let mut all = true;
    let z = tests
        .iter()
        .zip(summaries)
        .map(|(t, s)| {
            let d = t.decide(s);
            all &= d.accepted;
            d.z
        })
        .collect();
    (z, all)
}
