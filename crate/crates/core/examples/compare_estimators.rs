//! √PEHE and ATE error of the graph estimators against the Two-Model
//! baseline for two κ2 values on synthetic data.
//!
//! `cargo run --release --example compare_estimators -- [binary] [seeds] [preset]`

use std::time::Instant;

use gnum::estimators::Estimator;
use gnum::synth::SynthConfig;
use gnum::train::{kappa_sweep, Arch, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let binary = args.first().is_some_and(|a| a == "binary");
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let preset = args.get(2).map_or("desk", String::as_str);
    let base = SynthConfig { binary, monotone: binary, ..Default::default() };
    let desk = TrainConfig::preset(preset)?;
    let mut configs = vec![
        TrainConfig { estimator: Estimator::Ct, ..desk.clone() },
        TrainConfig { estimator: Estimator::TwoModel, backbone: Arch::None, ..desk.clone() },
    ];
    if binary {
        configs.insert(0, TrainConfig { estimator: Estimator::Pl, ..desk.clone() });
    }
    let start = Instant::now();
    let seeds: Vec<u64> = (0..seeds).collect();
    let (table, _) = kappa_sweep(&base, &[0.5, 2.0], &configs, &seeds, 1, None)?;
    print!("{}", table.to_csv());
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
