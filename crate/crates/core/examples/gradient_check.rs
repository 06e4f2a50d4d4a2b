//! Compare reverse-mode gradients of a two-layer encoder with central
//! finite differences.

use gnum::gnn::{Backbone, Encoder, EncoderConfig, MessageGraph};
use gnum::graph::Adjacency;
use gnum::ndiff::{grad_check, ParamStore};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 10;
    let edges: Vec<_> = (0..n).map(|i| (i, (i * 3 + 1) % n)).filter(|(a, b)| a != b).collect();
    let graph = MessageGraph::new(&Adjacency::from_edges(n, &edges, true)?);
    let x = Array2::from_shape_fn((n, 4), |_| rng.random_range(-1.0..1.0));
    for backbone in [Backbone::Gnum, Backbone::Gcn, Backbone::Gat] {
        let enc = Encoder::new(EncoderConfig { backbone, widths: vec![3, 2], attention_dim: Some(2) }, 4)?;
        let mut store = ParamStore::new();
        enc.init_params(&mut store, &mut rng)?;
        let err = grad_check(
            |tape, params| {
                let xv = tape.constant(x.clone());
                let h = enc
                    .forward(tape, xv, &graph, params)
                    .map_err(|e| gnum::ndiff::NdiffError::InvalidArgument(e.to_string()))?;
                let sq = tape.square(h)?;
                tape.sum(sq)
            },
            &store,
            1e-5,
        )?;
        println!("{:>4}: max relative error {err:.2e}", backbone.as_str());
    }
    Ok(())
}
