//! Qini coefficient of an oracle ranking against randomly permuted scores.

use gnum::metrics::{qini, qini_curve};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 4000;
    let tau: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 0.5).collect();
    let t: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let p = 0.2 + if t[i] == 1 { tau[i] } else { 0.0 };
            f64::from(u8::from(rng.random::<f64>() < p))
        })
        .collect();
    let curve = qini_curve(&tau, &t, &y, 10)?;
    for (k, g) in curve.points.iter() {
        println!("k {k:.1}  gain {g:8.2}");
    }
    println!("oracle qini {:.2}", qini(&tau, &t, &y, 100)?);
    let mut shuffled = tau.clone();
    let random: Vec<f64> = (0..50)
        .map(|_| {
            shuffled.shuffle(&mut rng);
            qini(&shuffled, &t, &y, 100)
        })
        .collect::<Result<_, _>>()?;
    println!("random mean {:.2}", random.iter().sum::<f64>() / random.len() as f64);
    Ok(())
}
