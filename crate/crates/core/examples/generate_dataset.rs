//! Generate a synthetic graph with known potential outcomes and save it.
//!
//! `cargo run --release --example generate_dataset -- [out.gnum.gz]`

use gnum::graph::save_dataset;
use gnum::synth::{generate, gini, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "dataset.gnum.gz".into());
    let generated = generate(&SynthConfig::default())?;
    let ds = &generated.dataset;
    let degrees: Vec<f64> = (0..ds.n_nodes()).map(|i| ds.adjacency().degree(i) as f64).collect();
    let tau = ds.true_uplift().expect("synthetic data has both outcomes");
    println!("nodes {}, edges {}, features {}", ds.n_nodes(), ds.n_edges(), ds.feature_dim());
    println!("degree gini {:.3}", gini(&degrees));
    println!("treated share {:.3}", ds.treated_fraction());
    println!("true ATE {:.3}", tau.iter().sum::<f64>() / tau.len() as f64);
    save_dataset(&path, ds)?;
    println!("wrote {path}");
    Ok(())
}
