use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::ndiff::Matrix;

use super::SynthError;

/// Per-node topic proportions and the two centroids that drive treatment
/// preference.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    /// `N × k`, each row on the simplex.
    pub proportions: Matrix,
    /// Topic vector of one uniformly chosen node.
    pub centroid_treated: Vec<f64>,
    /// Mean topic vector over all nodes.
    pub centroid_control: Vec<f64>,
    /// Node whose topics became `centroid_treated`.
    pub anchor: usize,
}

impl TopicModel {
    pub fn n_topics(&self) -> usize {
        self.proportions.ncols()
    }

    /// `r(x_i)ᵀ c` for every node.
    pub fn similarity(&self, centroid: &[f64]) -> Vec<f64> {
        self.proportions.rows().into_iter().map(|r| r.iter().zip(centroid).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Symmetric Dirichlet draw through normalized Gamma variates.
pub fn dirichlet<R: Rng + ?Sized>(alpha: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    loop {
        let g: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let s: f64 = g.iter().sum();
        if s > 0.0 && s.is_finite() {
            return g.into_iter().map(|x| x / s).collect();
        }
    }
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn pick<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Topic proportions `r(x_i) ~ Dirichlet(alpha·1_k)` and bag-of-words counts:
/// every topic has a sparse word distribution over `d` words, and each node
/// emits `words` tokens by first drawing a topic from its proportions, then a
/// word from that topic.
pub fn gen_topics<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    d: usize,
    words: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<(Matrix, TopicModel), SynthError> {
    if n == 0 || k == 0 || k > d || !(alpha > 0.0) {
        return Err(SynthError::Config(format!(
            "topic model needs n > 0, 0 < k <= d and alpha > 0, got n={n}, k={k}, d={d}, alpha={alpha}"
        )));
    }
    let word_cdfs: Vec<Vec<f64>> = (0..k).map(|_| cumulative(&dirichlet(0.1, d, rng))).collect();
    let mut proportions = Array2::zeros((n, k));
    let mut features = Array2::zeros((n, d));
    for i in 0..n {
        let r = dirichlet(alpha, k, rng);
        let cdf = cumulative(&r);
        for _ in 0..words {
            let t = pick(&cdf, rng);
            let w = pick(&word_cdfs[t], rng);
            features[[i, w]] += 1.0;
        }
        for (j, x) in r.into_iter().enumerate() {
            proportions[[i, j]] = x;
        }
    }
    let anchor = rng.random_range(0..n);
    let centroid_treated = proportions.row(anchor).to_vec();
    let centroid_control = proportions.mean_axis(ndarray::Axis(0)).expect("n > 0").to_vec();
    Ok((features, TopicModel { proportions, centroid_treated, centroid_control, anchor }))
}
