use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::Adjacency;

use super::{check_finite, check_len, MetricsError};

/// Mean squared gap between a node's uplift and the average uplift of its
/// neighbors, against the same statistic for random node sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborMse {
    pub neighbor_mse: f64,
    pub random_mse: f64,
    /// Non-isolated nodes that entered both averages.
    pub n_nodes: usize,
}

/// For every non-isolated node `i`: `a` is the mean of `τ̂` over its neighbors
/// and `b` the mean over `degree(i)` nodes drawn uniformly with replacement
/// from all nodes other than `i`. Returns the means of `(τ̂_i − a)²` and
/// `(τ̂_i − b)²`.
pub fn neighbor_uplift_mse(tau_hat: &[f64], adj: &Adjacency, seed: u64) -> Result<NeighborMse, MetricsError> {
    check_len("tau_hat vs nodes", tau_hat.len(), adj.n_nodes())?;
    check_finite("tau_hat", tau_hat)?;
    let n = adj.n_nodes();
    let neighbor = neighbor_term(tau_hat, adj)?;
    let random = random_term(tau_hat, adj, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(NeighborMse { neighbor_mse: neighbor.0, random_mse: random, n_nodes: neighbor.1.min(n) })
}

fn neighbor_term(tau_hat: &[f64], adj: &Adjacency) -> Result<(f64, usize), MetricsError> {
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..adj.n_nodes() {
        let nb = adj.neighbors(i);
        if nb.is_empty() {
            continue;
        }
        let a = nb.iter().map(|&j| tau_hat[j]).sum::<f64>() / nb.len() as f64;
        sum += (tau_hat[i] - a).powi(2);
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::AllIsolated);
    }
    Ok((sum / count as f64, count))
}

fn random_term<R: Rng>(tau_hat: &[f64], adj: &Adjacency, rng: &mut R) -> f64 {
    let n = adj.n_nodes();
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..n {
        let d = adj.degree(i);
        if d == 0 {
            continue;
        }
        let mut acc = 0.0;
        for _ in 0..d {
            let j = rng.random_range(0..n - 1);
            acc += tau_hat[if j >= i { j + 1 } else { j }];
        }
        sum += (tau_hat[i] - acc / d as f64).powi(2);
        count += 1;
    }
    sum / count as f64
}

/// Neighbor MSE against a null distribution of `draws` independent
/// random-set MSEs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborSignificance {
    pub neighbor_mse: f64,
    /// Mean of the random-set MSE over the draws.
    pub random_mse: f64,
    /// Standard deviation of the random-set MSE over the draws.
    pub random_sd: f64,
    /// `(random_mse − neighbor_mse) / random_sd`.
    pub z: f64,
}

pub fn neighbor_uplift_significance(
    tau_hat: &[f64],
    adj: &Adjacency,
    seed: u64,
    draws: usize,
) -> Result<NeighborSignificance, MetricsError> {
    check_len("tau_hat vs nodes", tau_hat.len(), adj.n_nodes())?;
    check_finite("tau_hat", tau_hat)?;
    if draws < 2 {
        return Err(MetricsError::Length("significance needs at least two random draws".into()));
    }
    let (neighbor_mse, _) = neighbor_term(tau_hat, adj)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let null: Vec<f64> = (0..draws).map(|_| random_term(tau_hat, adj, &mut rng)).collect();
    let m = null.iter().sum::<f64>() / draws as f64;
    let sd = (null.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
    let gap = m - neighbor_mse;
    let z = if sd > 0.0 {
        gap / sd
    } else if gap > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(NeighborSignificance { neighbor_mse, random_mse: m, random_sd: sd, z })
}
