//! The `abcstar` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{ConfigError, ExperimentConfig};
use crate::diagnostics::{exact_bin_masses, map_from_samples};
use crate::io::{
    create, write_calibration, write_chains, write_density_grid, write_power_curve, write_samples, write_series,
};
use crate::models::ma1::ma1_exact_posterior_mcmc;
use crate::numeric::Interval;
use crate::pipeline::{
    accuracy, build_tests, calibrate_tests, reproduce_critical_regions, reproduce_ma1_example, reproduce_normal_example, Check,
    Ma1Reproduction, ModelSetup, NormalReproduction, PipelineError, RunOutput,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "abcstar", version, about = "Approximate Bayesian computation with calibrated equivalence tests")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate the tests of the configured model.
    Calibrate,
    /// Calibrate, sample and score against the exact posterior.
    Run,
    /// Exact posterior on the diagnostics grid, plus the MCMC oracle for MA(1).
    Oracle,
    /// Re-run a published result and compare.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
    },
    /// Power of each calibrated test over a grid of rho.
    PowerCurve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    CriticalRegions,
    NormalExample,
    Ma1Example,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Usage(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Failed(String),
}

impl From<crate::io::IoError> for CliError {
    fn from(e: crate::io::IoError) -> Self {
        CliError::Pipeline(e.into())
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) | CliError::Pipeline(PipelineError::Config(_)) => EXIT_USAGE,
                _ => EXIT_CHECK_FAILED,
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(ConfigError::Invalid("--threads must be positive".into()).into());
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Command::Reproduce { target } = cli.command {
        let cfg = g.config.as_deref().map(ExperimentConfig::load).transpose()?;
        return reproduce(target, cfg.as_ref(), g);
    }
    let path = g.config.as_deref().ok_or_else(|| ConfigError::Invalid("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    let out = output_dir(g, Some(&cfg));
    let setup = ModelSetup::from_config(&cfg.model, cfg.seed)?;
    let header = format!("{}command = \"{}\"", cfg.to_toml(), command_name(&cli.command));
    let names = setup.model().param_names();
    match cli.command {
        Command::Calibrate => {
            let templates = setup.test_templates(cfg.calibration.alpha)?;
            let reports = calibrate_tests(&templates, &cfg.calibration, &cfg.tests)?;
            for (i, r) in reports.iter().enumerate() {
                println!(
                    "test {}: {} m={} tau=[{:.4}, {:.4}] c=[{:.4}, {:.4}] kl={:.3e}",
                    i + 1,
                    r.kind.name(),
                    r.m,
                    r.tau_minus,
                    r.tau_plus,
                    r.critical.c_minus,
                    r.critical.c_plus,
                    r.predicted_kl
                );
            }
            write_calibration(create(&out.join("calibration.csv"))?, &reports, &header)?;
        }
        Command::Run => {
            let templates = setup.test_templates(cfg.calibration.alpha)?;
            let reports = calibrate_tests(&templates, &cfg.calibration, &cfg.tests)?;
            let tests = build_tests(&templates, &reports)?;
            write_series(create(&out.join("data.csv"))?, setup.model().observed_data(), &header)?;
            write_calibration(create(&out.join("calibration.csv"))?, &reports, &header)?;
            let output = crate::pipeline::run_sampler(&setup, &tests, &cfg.sampler, cfg.seed)?;
            match &output {
                RunOutput::Samples(s) => write_samples(create(&out.join("samples.csv"))?, s, &names, &header)?,
                RunOutput::Chains(c) => write_chains(create(&out.join("chains.csv"))?, c, &names, &header)?,
            }
            let report = accuracy(&setup, &output, &cfg.diagnostics, cfg.calibration.alpha, cfg.seed)?;
            println!("acceptance rate: {:.4}", report.acceptance_rate);
            println!("draws: {}", report.accepted);
            println!("KL ({:?}): {:.4} (floor {:.4})", report.kl_direction, report.kl_divergence, report.kl_floor);
            println!("MAP: {:?} (exact {:?})", report.map_estimate, report.exact_map);
            let json = toml::to_string(&report).map_err(|e| CliError::Failed(e.to_string()))?;
            std::fs::write(out.join("accuracy.toml"), json)
                .map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))?;
        }
        Command::Oracle => {
            let posterior = setup.exact_posterior()?;
            let binning = setup.binning(cfg.diagnostics.bins)?;
            let masses = exact_bin_masses(posterior.as_ref(), &binning).map_err(PipelineError::from)?;
            write_density_grid(create(&out.join("posterior_grid.csv"))?, &binning, &masses, &names, &header)?;
            println!("exact MAP: {:?}", posterior.map());
            if let ModelSetup::Ma1(m) = &setup {
                let chain = ma1_exact_posterior_mcmc(&m.series, &m.prior, &cfg.oracle, cfg.seed)
                    .map_err(PipelineError::from)?;
                let map = map_from_samples(&chain.kept_thetas(), &binning.bounds).map_err(PipelineError::from)?;
                println!("oracle MAP: {:?}", map.theta);
                println!("oracle acceptance rate: {:.4}", chain.acceptance_rate());
                write_chains(create(&out.join("oracle_chain.csv"))?, &[chain], &names, &header)?;
            }
        }
        Command::PowerCurve => {
            let templates = setup.test_templates(cfg.calibration.alpha)?;
            let reports = calibrate_tests(&templates, &cfg.calibration, &cfg.tests)?;
            let tests = build_tests(&templates, &reports)?;
            let mut rows = Vec::new();
            for (i, (t, tmpl)) in tests.iter().zip(&templates).enumerate() {
                let range = match cfg.power_curve.range {
                    Some([lo, hi]) => Interval::new(lo, hi).map_err(|e| ConfigError::Invalid(e.to_string()))?,
                    None => tmpl.rho_support,
                };
                for rho in range.linspace(cfg.power_curve.points) {
                    let p = t.power(rho).map_err(PipelineError::from)?;
                    rows.push((i + 1, rho, p));
                }
            }
            write_power_curve(create(&out.join("power_curve.csv"))?, &rows, &header)?;
            println!("wrote {} points", rows.len());
        }
        Command::Reproduce { .. } => unreachable!("handled above"),
    }
    Ok(EXIT_OK)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Calibrate => "calibrate",
        Command::Run => "run",
        Command::Oracle => "oracle",
        Command::Reproduce { .. } => "reproduce",
        Command::PowerCurve => "power-curve",
    }
}

fn output_dir(g: &GlobalArgs, cfg: Option<&ExperimentConfig>) -> PathBuf {
    g.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| Path::new("out").to_path_buf())
}

fn reproduce(target: Target, cfg: Option<&ExperimentConfig>, g: &GlobalArgs) -> Result<i32, CliError> {
    let seed = g.seed.or(cfg.map(|c| c.seed)).unwrap_or(1);
    let checks = match target {
        Target::CriticalRegions => reproduce_critical_regions()?,
        Target::NormalExample => {
            let sizes = NormalReproduction {
                replicates: cfg.map_or(NormalReproduction::default().replicates, |c| c.replicates),
                ..Default::default()
            };
            reproduce_normal_example(seed, &sizes)?
        }
        Target::Ma1Example => {
            let sizes = Ma1Reproduction { oracle: cfg.map(|c| c.oracle).unwrap_or_default(), ..Default::default() };
            reproduce_ma1_example(seed, &sizes)?
        }
    };
    print_checks(&checks);
    let out = output_dir(g, cfg);
    let name = target.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let header = format!("reproduce = \"{name}\"\nseed = {seed}");
    write_checks(create(&out.join(format!("reproduce_{}.csv", name.replace('-', "_"))))?, &checks, &header)?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        println!("{failed} of {} checks failed", checks.len());
        Ok(EXIT_CHECK_FAILED)
    } else {
        println!("all {} checks passed", checks.len());
        Ok(EXIT_OK)
    }
}

fn write_checks<W: std::io::Write>(mut out: W, checks: &[Check], header: &str) -> Result<(), CliError> {
    out.write_all(crate::io::comment_block(header).as_bytes()).map_err(crate::io::IoError::from)?;
    let mut w = csv::Writer::from_writer(out);
    for c in checks {
        w.serialize(c).map_err(crate::io::IoError::from)?;
    }
    w.flush().map_err(crate::io::IoError::from)?;
    Ok(())
}

pub fn print_checks(checks: &[Check]) {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in checks {
        println!(
            "{} {:width$}  computed {:>10}  published {:>8}  tol {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.computed,
            c.published,
            c.tolerance
        );
    }
}
