//! The transformed target `z = y (t - p) / (p (1 - p))` averages to the
//! treatment effect in a randomized trial.

use gnum::estimators::transformed_target;
use gnum::graph::Propensity;
use gnum::synth::{generate, SynthConfig, TreatmentMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for seed in 0..3 {
        let cfg = SynthConfig {
            n_nodes: 50_000,
            treatment: TreatmentMode::Randomized,
            treat_prob: 0.5,
            seed,
            ..SynthConfig::default()
        };
        let ds = generate(&cfg)?.dataset;
        let z = transformed_target(ds.treatment(), ds.outcome_obs(), &Propensity::Constant(0.5))?;
        let tau = ds.true_uplift().expect("synthetic data has both outcomes");
        let n = z.len() as f64;
        println!("seed {seed}: mean z {:.3}, true ATE {:.3}", z.iter().sum::<f64>() / n, tau.iter().sum::<f64>() / n);
    }
    Ok(())
}
