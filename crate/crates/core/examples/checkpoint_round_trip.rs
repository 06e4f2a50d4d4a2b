//! Save a trained model, load it back and confirm identical predictions.

use gnum::graph::{make_splits, SplitFractions};
use gnum::synth::{generate, SynthConfig};
use gnum::train::{load_model, save_model, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate(&SynthConfig::preset("toy")?)?.dataset;
    let masks = make_splits(ds.n_nodes(), SplitFractions::default(), 0)?;
    let cfg = TrainConfig::preset("toy")?;
    let model = train(&ds, &masks, &cfg)?.model;
    let path = std::env::temp_dir().join("gnum-example.ckpt");
    save_model(&path, &model)?;
    let back = load_model(&path, Some(&cfg))?;
    let same = model.predict(&ds)? == back.predict(&ds)?;
    println!("{} bytes, predictions identical: {same}", std::fs::metadata(&path)?.len());
    Ok(())
}
