//! The class-transformed estimator on each encoder backbone.

use gnum::graph::{make_splits, SplitFractions};
use gnum::synth::{generate, SynthConfig};
use gnum::train::{evaluate, train, Arch, EvalOptions, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(&SynthConfig::preset("desk")?)?.dataset;
    let masks = make_splits(ds.n_nodes(), SplitFractions::default(), 0)?;
    for backbone in [Arch::Gnum, Arch::Gcn, Arch::Gat] {
        let cfg = TrainConfig { backbone, ..TrainConfig::preset("desk")? };
        let model = train(&ds, &masks, &cfg)?.model;
        let r = evaluate(&model, &ds, &masks.test_indices(), &EvalOptions::default())?;
        println!("{:>5}: sqrt pehe {:.3}, qini {:.2}", backbone.as_str(), r.pehe.unwrap_or(f64::NAN), r.qini);
    }
    Ok(())
}
