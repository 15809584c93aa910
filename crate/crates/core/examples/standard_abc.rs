//! Standard ABC with hand-picked tolerances, compared with the analytic
//! posterior. Narrow tolerances are accurate but accept little.

use abcstar::config::{ModelConfig, NormalConfig, SamplerConfig, SamplerKind};
use abcstar::diagnostics::KlDirection;
use abcstar::pipeline::{run_sampler, ModelSetup, Reference};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 3;
    let setup = ModelSetup::from_config(&ModelConfig::Normal(NormalConfig::default()), seed)?;
    let reference = Reference::new(&setup, 100)?;
    println!("{:>6} {:>10} {:>12} {:>12}", "c", "accept %", "KL(abc||ex)", "KL(ex||abc)");
    for c in [0.8, 0.4, 0.2, 0.05] {
        let cfg = SamplerConfig {
            kind: SamplerKind::StandardAbc,
            iterations: 200_000,
            tolerances: vec![[-c, c]],
            ..Default::default()
        };
        let run = run_sampler(&setup, &[], &cfg, seed)?;
        let r = reference.score(&run.posterior_draws(), run.acceptance_rate(), 0.01, KlDirection::AbcToExact, seed)?;
        println!(
            "{c:>6} {:>10.2} {:>12.4} {:>12.4}",
            100.0 * r.acceptance_rate,
            r.kl_divergence,
            r.kl_other_direction
        );
    }
    Ok(())
}
