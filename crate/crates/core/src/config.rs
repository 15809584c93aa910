//! Experiment configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::KlDirection;
use crate::models::ma1::OracleSettings;
use crate::models::SubsetScheme;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Full description of one experiment. Only `seed` and `model` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    /// Per-test overrides, matched to the model's tests by position.
    #[serde(default)]
    pub tests: Vec<TestOverride>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub oracle: OracleSettings,
    #[serde(default)]
    pub power_curve: PowerCurveConfig,
}

fn default_replicates() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    Normal(NormalConfig),
    Ma1(Ma1Config),
}

/// Normal data with known zero mean. Without `data`, pseudo data of size `n`
/// with `S²(x)/n = sigma2_hat` is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalConfig {
    pub n: usize,
    pub prior: [f64; 2],
    pub sigma2_hat: f64,
    pub data: Option<PathBuf>,
}

impl Default for NormalConfig {
    fn default() -> Self {
        Self { n: 60, prior: [0.2, 4.0], sigma2_hat: 1.0, data: None }
    }
}

/// MA(1) series. Without `data`, the series of length `n` simulated at
/// `(a0, sigma2_0)` whose moments are closest to the theoretical ones among
/// `candidates` draws is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ma1Config {
    pub n: usize,
    pub a0: f64,
    pub sigma2_0: f64,
    pub a_range: [f64; 2],
    pub sigma2_range: [f64; 2],
    pub scheme: SubsetScheme,
    pub candidates: usize,
    pub data: Option<PathBuf>,
}

impl Default for Ma1Config {
    fn default() -> Self {
        Self {
            n: 150,
            a0: 0.1,
            sigma2_0: 1.0,
            a_range: [-0.45, 0.45],
            sigma2_range: [0.3, 1.7],
            scheme: SubsetScheme::IgnoreAutocorr,
            candidates: 2000,
            data: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub target_power: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { alpha: 0.01, epsilon: 1e-4, target_power: 0.9 }
    }
}

/// Fix `m` (tolerances are then calibrated at that `m`), or fix both `m`
/// and `tau` to skip calibration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestOverride {
    pub m: Option<usize>,
    pub tau: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    #[default]
    Rejection,
    Mcmc,
    StandardAbc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Proposals (rejection samplers) or chain length (MCMC).
    pub iterations: usize,
    pub burn_in: usize,
    pub chains: usize,
    /// MCMC proposal covariance; defaults to the oracle kernel for MA(1)
    /// and `0.1` for the normal model.
    pub proposal_cov: Option<Vec<Vec<f64>>>,
    /// Initial widening factor of the MCMC annealing schedule.
    pub annealing_factor: Option<f64>,
    /// Standard ABC tolerances `[c-, c+]`, one per summary statistic.
    pub tolerances: Vec<[f64; 2]>,
    /// Standard ABC simulation length; defaults to the observed length.
    pub sim_size: Option<usize>,
    pub keep_rejected: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Rejection,
            iterations: 1_000_000,
            burn_in: 0,
            chains: 1,
            proposal_cov: None,
            annealing_factor: None,
            tolerances: Vec::new(),
            sim_size: None,
            keep_rejected: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub bins: usize,
    pub kl_direction: KlDirection,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { bins: 100, kl_direction: KlDirection::ExactToAbc }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerCurveConfig {
    pub points: usize,
    /// `rho` range; defaults to the prior's image of each test.
    pub range: Option<[f64; 2]>,
}

impl Default for PowerCurveConfig {
    fn default() -> Self {
        Self { points: 200, range: None }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config; relative data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let data = match &mut cfg.model {
            ModelConfig::Normal(c) => &mut c.data,
            ModelConfig::Ma1(c) => &mut c.data,
        };
        if let Some(d) = data {
            if d.is_relative() {
                *d = base.join(&*d);
            }
            if !d.exists() {
                return Err(ConfigError::Invalid(format!("data file {} does not exist", d.display())));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        let c = &self.calibration;
        if !(c.alpha > 0.0 && c.alpha < 0.5) {
            return bad(format!("alpha must be in (0, 0.5), got {}", c.alpha));
        }
        if !(c.target_power > c.alpha && c.target_power < 1.0) {
            return bad(format!("target_power must be in (alpha, 1), got {}", c.target_power));
        }
        match &self.model {
            ModelConfig::Normal(n) => {
                if n.n < 3 || !(n.prior[0] > 0.0 && n.prior[0] < n.prior[1]) || !(n.sigma2_hat > 0.0) {
                    return bad(format!("invalid normal model {n:?}"));
                }
            }
            ModelConfig::Ma1(m) => {
                if m.n < 10 || !(m.sigma2_0 > 0.0) || m.a0.abs() > 0.5 {
                    return bad(format!("invalid ma1 model {m:?}"));
                }
            }
        }
        if self.sampler.iterations == 0 || self.sampler.chains == 0 {
            return bad("sampler iterations and chains must be positive".into());
        }
        if self.sampler.kind == SamplerKind::Mcmc && self.sampler.burn_in >= self.sampler.iterations {
            return bad("burn_in must be below iterations".into());
        }
        if self.diagnostics.bins < 2 || self.power_curve.points < 2 || self.replicates == 0 {
            return bad("bins, power-curve points and replicates must be at least 2, 2 and 1".into());
        }
        Ok(())
    }

    /// The resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
