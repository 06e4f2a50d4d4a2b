use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::Adjacency;
use crate::ndiff::sigmoid;

use super::{SynthError, TopicModel};

/// Treatment preference scores and the resulting assignment probability.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentModel {
    pub p1: Vec<f64>,
    pub p0: Vec<f64>,
    /// `Pr(t = 1) = exp(p1) / (exp(p1) + exp(p0))`.
    pub prob: Vec<f64>,
}

/// `p_c^i = κ1 r_iᵀ c + κ2 Σ_{j ∈ N(i)} r_jᵀ c` for both centroids.
pub fn treatment_model(topics: &TopicModel, adj: &Adjacency, kappa1: f64, kappa2: f64) -> TreatmentModel {
    let s1 = topics.similarity(&topics.centroid_treated);
    let s0 = topics.similarity(&topics.centroid_control);
    let score = |s: &[f64], i: usize| kappa1 * s[i] + kappa2 * adj.neighbors(i).iter().map(|&j| s[j]).sum::<f64>();
    let n = adj.n_nodes();
    let p1: Vec<f64> = (0..n).map(|i| score(&s1, i)).collect();
    let p0: Vec<f64> = (0..n).map(|i| score(&s0, i)).collect();
    // two-way softmax as a sigmoid of the difference never overflows
    let prob = p1.iter().zip(&p0).map(|(a, b)| sigmoid(a - b)).collect();
    TreatmentModel { p1, p0, prob }
}

/// Bernoulli draws `t_i ~ Bernoulli(prob_i)`.
pub fn assign_treatments<R: Rng + ?Sized>(prob: &[f64], rng: &mut R) -> Vec<u8> {
    prob.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect()
}

/// Randomized experiment: i.i.d. `Bernoulli(p)`.
pub fn randomize_treatments<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Vec<u8>, SynthError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SynthError::Config(format!("treatment probability must be in (0, 1), got {p}")));
    }
    Ok((0..n).map(|_| u8::from(rng.random::<f64>() < p)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes {
    pub factual: Vec<f64>,
    pub counterfactual: Vec<f64>,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
}

impl Outcomes {
    pub fn uplift(&self) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect()
    }
}

/// `y(1) = C(p0 + p1) + ε₁`, `y(0) = C·p0 + ε₀`. The two noise terms of
/// node `i` are drawn in node order from `noise_rng`, so they belong to the
/// node and arm, never to the assignment.
pub fn gen_outcomes<R: Rng + ?Sized>(
    p0: &[f64],
    p1: &[f64],
    t: &[u8],
    c: f64,
    noise_sd: f64,
    noise_rng: &mut R,
) -> Result<Outcomes, SynthError> {
    if p0.len() != p1.len() || p0.len() != t.len() {
        return Err(SynthError::Config("p0, p1 and t must have equal length".into()));
    }
    if !(noise_sd >= 0.0) {
        return Err(SynthError::Config(format!("noise_sd must be >= 0, got {noise_sd}")));
    }
    let normal = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut draw = || if noise_sd == 0.0 { 0.0 } else { normal.sample(noise_rng) };
    let n = t.len();
    let (mut y1, mut y0) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let e1 = draw();
        let e0 = draw();
        y1.push(c * (p0[i] + p1[i]) + e1);
        y0.push(c * p0[i] + e0);
    }
    let factual = (0..n).map(|i| if t[i] == 1 { y1[i] } else { y0[i] }).collect();
    let counterfactual = (0..n).map(|i| if t[i] == 1 { y0[i] } else { y1[i] }).collect();
    Ok(Outcomes { factual, counterfactual, y1, y0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryOutcomes {
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    pub observed: Vec<f64>,
    pub threshold: f64,
}

/// Threshold potential outcomes into {0, 1}. The default threshold is the
/// mean factual outcome. In monotone mode `y(1)` is raised to
/// `max(y(1), y(0))` so no node is harmed by treatment.
pub fn binarize(
    y1: &[f64],
    y0: &[f64],
    t: &[u8],
    threshold: Option<f64>,
    monotone: bool,
) -> Result<BinaryOutcomes, SynthError> {
    let n = t.len();
    if n == 0 || y1.len() != n || y0.len() != n {
        return Err(SynthError::Config("binarize needs equal, non-empty y(1), y(0) and t".into()));
    }
    let factual: Vec<f64> = (0..n).map(|i| if t[i] == 1 { y1[i] } else { y0[i] }).collect();
    let threshold = match threshold {
        Some(th) => th,
        None => {
            let (lo, hi) = factual.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            if lo == hi {
                return Err(SynthError::Degenerate(format!("all factual outcomes equal {lo}; cannot threshold")));
            }
            factual.iter().sum::<f64>() / n as f64
        }
    };
    let bit = |v: f64| if v > threshold { 1.0 } else { 0.0 };
    let b0: Vec<f64> = y0.iter().map(|&v| bit(v)).collect();
    let b1: Vec<f64> = y1.iter().zip(&b0).map(|(&v, &b)| if monotone { bit(v).max(b) } else { bit(v) }).collect();
    let observed = (0..n).map(|i| if t[i] == 1 { b1[i] } else { b0[i] }).collect();
    Ok(BinaryOutcomes { y1: b1, y0: b0, observed, threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path4() -> (TopicModel, Adjacency) {
        let tm = TopicModel {
            proportions: array![[1.0, 0.0], [0.5, 0.5], [0.2, 0.8], [0.0, 1.0]],
            centroid_treated: vec![0.9, 0.1],
            centroid_control: vec![0.425, 0.575],
            anchor: 0,
        };
        (tm, Adjacency::from_edges(4, &[(0, 1), (1, 2), (2, 3)], true).unwrap())
    }

    #[test]
    fn no_confounding_is_a_coin_flip() {
        let (tm, adj) = path4();
        assert!(treatment_model(&tm, &adj, 0.0, 0.0).prob.iter().all(|&p| p == 0.5));
        let same = TopicModel { centroid_control: tm.centroid_treated.clone(), ..tm };
        assert!(treatment_model(&same, &adj, 10.0, 2.0).prob.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn path_matches_scalar_recomputation() {
        let (tm, adj) = path4();
        let m = treatment_model(&tm, &adj, 10.0, 0.5);
        let r = [[1.0, 0.0], [0.5, 0.5], [0.2, 0.8], [0.0, 1.0]];
        let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        let (c1, c0) = ([0.9, 0.1], [0.425, 0.575]);
        let nbrs: [&[usize]; 4] = [&[1], &[0, 2], &[1, 3], &[2]];
        for i in 0..4 {
            let p1 = 10.0 * dot(r[i], c1) + 0.5 * nbrs[i].iter().map(|&j| dot(r[j], c1)).sum::<f64>();
            let p0 = 10.0 * dot(r[i], c0) + 0.5 * nbrs[i].iter().map(|&j| dot(r[j], c0)).sum::<f64>();
            let prob = p1.exp() / (p1.exp() + p0.exp());
            assert!((m.p1[i] - p1).abs() < 1e-12);
            assert!((m.p0[i] - p0).abs() < 1e-12);
            assert!((m.prob[i] - prob).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_free_outcomes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p0 = [0.2, 0.4, 1.0];
        let p1 = [1.5, 0.1, 0.0];
        let o = gen_outcomes(&p0, &p1, &[1, 0, 1], 5.0, 0.0, &mut rng).unwrap();
        assert!((o.factual[0] - o.counterfactual[0] - 5.0 * 1.5).abs() < 1e-12);
        let ate = o.uplift().iter().sum::<f64>() / 3.0;
        assert!((ate - 5.0 * (1.6 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn flipping_treatment_swaps_factual_and_counterfactual() {
        let p0 = [0.2, 0.4, 1.0, 0.3];
        let p1 = [1.5, 0.1, 0.0, 0.7];
        let t = [1, 0, 1, 0];
        let flipped: Vec<u8> = t.iter().map(|x| 1 - x).collect();
        let a = gen_outcomes(&p0, &p1, &t, 5.0, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = gen_outcomes(&p0, &p1, &flipped, 5.0, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.factual, b.counterfactual);
        assert_eq!(a.counterfactual, b.factual);
    }

    #[test]
    fn binarize_modes() {
        let y1 = [3.0, 0.0, 5.0, 1.0];
        let y0 = [1.0, 4.0, 0.0, 2.0];
        let t = [1, 1, 0, 0];
        let b = binarize(&y1, &y0, &t, None, false).unwrap();
        assert_eq!(b.threshold, (3.0 + 0.0 + 0.0 + 2.0) / 4.0);
        assert!(b.observed.contains(&0.0) && b.observed.contains(&1.0));
        assert_eq!(b.y1, vec![1.0, 0.0, 1.0, 0.0]);
        let m = binarize(&y1, &y0, &t, None, true).unwrap();
        assert!(m.y1.iter().zip(&m.y0).all(|(a, b)| a >= b));
        assert_eq!(m.y1[1], 1.0);
        assert!(binarize(&[1.0, 1.0], &[1.0, 1.0], &[0, 1], None, false).is_err());
    }

    #[test]
    fn randomized_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let t = randomize_treatments(n, 0.5, &mut rng).unwrap();
        let frac = t.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
        assert!((frac - 0.5).abs() < 3.0 * (0.25f64 / n as f64).sqrt());
        assert!(randomize_treatments(10, 1.0, &mut rng).is_err());
        let a = randomize_treatments(50, 0.3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = randomize_treatments(50, 0.3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
    }
}
