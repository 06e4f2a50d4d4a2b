//! Test-set Qini as the share of labeled training nodes shrinks.

use gnum::estimators::Estimator;
use gnum::graph::{make_splits, SplitFractions};
use gnum::synth::{generate, SynthConfig};
use gnum::train::{scarcity_sweep, Arch, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let ds = generate(&SynthConfig::preset("desk-binary")?)?.dataset;
    let masks = make_splits(ds.n_nodes(), SplitFractions::default(), 0)?;
    let desk = TrainConfig::preset("desk")?;
    let configs = [
        TrainConfig { estimator: Estimator::Pl, ..desk.clone() },
        TrainConfig { estimator: Estimator::TwoModel, backbone: Arch::None, ..desk },
    ];
    let (table, _) = scarcity_sweep(&ds, &masks, &configs, &[0.1, 0.3, 0.6, 0.9], &[0], 1, None)?;
    print!("{}", table.to_csv());
    Ok(())
}
