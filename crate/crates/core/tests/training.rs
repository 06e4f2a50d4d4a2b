//! End-to-end training behavior on small generated graphs.

use gnum::estimators::Estimator;
use gnum::graph::{make_splits, SplitFractions};
use gnum::metrics::qini;
use gnum::synth::{generate, SynthConfig};
use gnum::train::{scarcity_sweep, train, Arch, TrainConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(n: usize, seed: u64) -> SynthConfig {
    SynthConfig { n_nodes: n, seed, ..SynthConfig::preset("toy").unwrap() }
}

#[test]
fn class_transform_memorizes_noise_free_data() {
    let ds = generate(&SynthConfig { noise_sd: 0.0, ..small(50, 3) }).unwrap().dataset;
    let masks = make_splits(50, SplitFractions { train: 0.8, val: 0.1, test: 0.1 }, 3).unwrap();
    let cfg = TrainConfig {
        estimator: Estimator::Ct,
        widths: vec![32, 32],
        attention_dim: 16,
        epochs: 2000,
        learning_rate: 1e-2,
        weight_decay: 0.0,
        batch_size: 64,
        patience: 0,
        ..TrainConfig::preset("toy").unwrap()
    };
    let out = train(&ds, &masks, &cfg).unwrap();
    let best = out.history.train_loss.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(best < 1e-3, "lowest training loss {best}");
}

#[test]
fn partial_label_loss_decreases_early() {
    let ds = generate(&SynthConfig { binary: true, monotone: true, ..small(12, 5) }).unwrap().dataset;
    let masks = make_splits(12, SplitFractions::default(), 5).unwrap();
    let cfg = TrainConfig { estimator: Estimator::Pl, epochs: 200, ..TrainConfig::preset("toy").unwrap() };
    let loss = train(&ds, &masks, &cfg).unwrap().history.train_loss;
    assert_eq!(loss.len(), 200);
    let rises = loss[..10].windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 2, "{:?}", &loss[..10]);
    assert!(loss[199] < loss[0]);
}

#[test]
fn predictions_follow_node_relabeling() {
    let ds = generate(&small(40, 8)).unwrap().dataset;
    let masks = make_splits(40, SplitFractions::default(), 8).unwrap();
    for backbone in [Arch::Gnum, Arch::Gcn, Arch::Gat] {
        let cfg = TrainConfig { backbone, epochs: 3, ..TrainConfig::preset("toy").unwrap() };
        let model = train(&ds, &masks, &cfg).unwrap().model;
        let mut perm: Vec<usize> = (0..40).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let tau = model.predict(&ds).unwrap();
        let ptau = model.predict(&ds.permuted(&perm).unwrap()).unwrap();
        for i in 0..40 {
            assert!((tau[i] - ptau[perm[i]]).abs() < 1e-9, "{backbone:?} node {i}");
        }
    }
}

#[test]
fn full_label_fraction_matches_plain_training() {
    let ds = generate(&small(80, 2)).unwrap().dataset;
    let masks = make_splits(80, SplitFractions::default(), 2).unwrap();
    let cfg = TrainConfig { epochs: 5, ..TrainConfig::preset("toy").unwrap() };
    let (_, rows) = scarcity_sweep(&ds, &masks, &[cfg.clone()], &[1.0], &[4], 1, None).unwrap();
    let model = train(&ds, &masks, &TrainConfig { seed: 4, ..cfg }).unwrap().model;
    let tau = model.predict(&ds).unwrap();
    let test = masks.test_indices();
    let q = qini(
        &test.iter().map(|&i| tau[i]).collect::<Vec<_>>(),
        &test.iter().map(|&i| ds.treatment()[i]).collect::<Vec<_>>(),
        &test.iter().map(|&i| ds.outcome_obs()[i]).collect::<Vec<_>>(),
        100,
    )
    .unwrap();
    assert_eq!(rows.len(), 1);
    assert!((rows[0].qini - q).abs() <= 1e-9 * q.abs().max(1.0), "{} vs {q}", rows[0].qini);
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn more_labels_help_the_two_model_baseline() {
    let cfg = SynthConfig { n_nodes: 1500, feature_dim: 30, ..SynthConfig::preset("desk").unwrap() };
    let ds = generate(&cfg).unwrap().dataset;
    let masks = make_splits(ds.n_nodes(), SplitFractions::default(), 0).unwrap();
    let tm =
        TrainConfig { estimator: Estimator::TwoModel, backbone: Arch::None, ..TrainConfig::preset("desk").unwrap() };
    let fractions = [0.05, 0.2, 0.5, 1.0];
    let (_, rows) = scarcity_sweep(&ds, &masks, &[tm], &fractions, &[0, 1, 2], 1, None).unwrap();
    let means: Vec<f64> = fractions
        .iter()
        .map(|&f| {
            let v: Vec<f64> = rows.iter().filter(|r| r.fraction == f).map(|r| r.qini).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let rho = spearman(&fractions, &means);
    assert!(rho > 0.0, "mean qini by fraction {means:?}, spearman {rho}");
}
