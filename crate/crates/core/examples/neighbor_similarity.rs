//! Do linked nodes receive similar predicted uplift? Trains CT and compares
//! the neighbor-pair error with random pairs.

use gnum::graph::{make_splits, SplitFractions};
use gnum::metrics::neighbor_uplift_significance;
use gnum::synth::{generate, SynthConfig};
use gnum::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(&SynthConfig::preset("desk")?)?.dataset;
    let masks = make_splits(ds.n_nodes(), SplitFractions::default(), 0)?;
    let model = train(&ds, &masks, &TrainConfig::preset("desk")?)?.model;
    let tau = model.predict(&ds)?;
    let s = neighbor_uplift_significance(&tau, ds.adjacency(), 0, 200)?;
    println!("neighbor pairs  {:.4}", s.neighbor_mse);
    println!("random pairs    {:.4} ± {:.4}", s.random_mse, s.random_sd);
    println!("separation      {:.1} sd", s.z);
    Ok(())
}
