//! Exact MA(1) posterior two ways: grid integration and a Metropolis-Hastings
//! chain on the conditional likelihood.

use abcstar::config::{Ma1Config, ModelConfig};
use abcstar::diagnostics::{exact_bin_masses, kl_from_masses, map_from_samples, sample_histogram, Binning, KlDirection};
use abcstar::models::ma1::{ma1_exact_posterior_mcmc, OracleSettings};
use abcstar::pipeline::ModelSetup;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 9;
    let ModelSetup::Ma1(model) = ModelSetup::from_config(&ModelConfig::Ma1(Ma1Config::default()), seed)? else {
        unreachable!()
    };
    println!("nu_hat = ({:.4}, {:.4})", model.nu_hat.0, model.nu_hat.1);

    let posterior = model.exact_posterior()?;
    let binning = Binning::standard(model.prior.bounding_box())?;
    let masses = exact_bin_masses(&posterior, &binning)?;
    let map = abcstar::models::ExactPosterior::map(&posterior);
    println!("grid MAP a={:.4} sigma2={:.4}", map[0], map[1]);

    let settings = OracleSettings { iterations: 30_000, burn_in: 3_000, chains: 4 };
    let chain = ma1_exact_posterior_mcmc(&model.series, &model.prior, &settings, seed)?;
    let draws = chain.kept_thetas();
    let mcmc_map = map_from_samples(&draws, &binning.bounds)?;
    println!("MCMC MAP a={:.4} sigma2={:.4}  acceptance {:.3}", mcmc_map.theta[0], mcmc_map.theta[1], chain.acceptance_rate());
    let kl = kl_from_masses(&masses, &sample_histogram(&draws, &binning)?, KlDirection::ExactToAbc);
    println!("KL(grid || MCMC histogram) = {kl:.4} over {} draws", draws.len());
    Ok(())
}
