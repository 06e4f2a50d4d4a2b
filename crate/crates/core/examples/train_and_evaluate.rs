//! Train the class-transformed estimator on a desk-sized graph and print the
//! test-set report.
//!
//! `cargo run --release --example train_and_evaluate -- [ct|pl|ctm|two-model]`

use gnum::estimators::Estimator;
use gnum::graph::{make_splits, SplitFractions};
use gnum::synth::{generate, SynthConfig};
use gnum::train::{evaluate, train, Arch, EvalOptions, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let estimator: Estimator = std::env::args().nth(1).unwrap_or_else(|| "ct".into()).parse()?;
    let synth = if estimator == Estimator::Pl { "desk-binary" } else { "desk" };
    let ds = generate(&SynthConfig::preset(synth)?)?.dataset;
    let masks = make_splits(ds.n_nodes(), SplitFractions::default(), 0)?;
    let backbone = if estimator.uses_graph() { Arch::Gnum } else { Arch::None };
    let cfg = TrainConfig { estimator, backbone, ..TrainConfig::preset("desk")? };
    let out = train(&ds, &masks, &cfg)?;
    println!("stopped after {} epochs, best {}", out.history.epochs(), out.best_epoch);
    let report = evaluate(&out.model, &ds, &masks.test_indices(), &EvalOptions::default())?;
    print!("{}", report.to_text());
    Ok(())
}
