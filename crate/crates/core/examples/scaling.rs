//! Encoder forward time against edge count on preferential-attachment graphs.

use std::time::Instant;

use gnum::gnn::{Backbone, Encoder, EncoderConfig, MessageGraph};
use gnum::graph::Adjacency;
use gnum::ndiff::ParamStore;
use gnum::synth::preferential_attachment;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let enc =
        Encoder::new(EncoderConfig { backbone: Backbone::Gnum, widths: vec![32, 32], attention_dim: Some(16) }, 32)?;
    for m in [10_000usize, 20_000, 40_000, 80_000] {
        let n = m / 5;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let edges = preferential_attachment(n, 5, &mut rng)?;
        let graph = MessageGraph::new(&Adjacency::from_edges(n, &edges, true)?);
        let x = Array2::from_shape_fn((n, 32), |_| rng.random_range(-1.0..1.0));
        let mut store = ParamStore::new();
        enc.init_params(&mut store, &mut rng)?;
        let start = Instant::now();
        enc.encode(&x, &graph, &store)?;
        println!("{:>6} edges: {:.1} ms", edges.len(), start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(())
}
