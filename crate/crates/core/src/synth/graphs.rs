use rand::Rng;

use crate::ndiff::Matrix;

use super::SynthError;

/// Barabási–Albert growth: an initial clique on `m` nodes, then every new node
/// links to `m` distinct existing nodes chosen with probability proportional
/// to degree. Yields exactly `m(n - m) + m(m - 1)/2` undirected edges.
pub fn preferential_attachment<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>, SynthError> {
    homophilous_attachment(n, m, None, 0.0, rng)
}

/// Candidates drawn per homophilous link.
const HOMOPHILY_CANDIDATES: usize = 8;

/// Preferential attachment where a share `homophily` of links prefers similar
/// nodes: the target is chosen among a few degree-proportional candidates
/// with probability proportional to `r_newᵀ r_candidate`. Edge count and the
/// simple-graph guarantees are those of [`preferential_attachment`].
pub fn homophilous_attachment<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    topics: Option<&Matrix>,
    homophily: f64,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>, SynthError> {
    if !(0.0..=1.0).contains(&homophily) || (homophily > 0.0 && topics.is_none_or(|t| t.nrows() != n)) {
        return Err(SynthError::Config(format!(
            "homophily must be in [0, 1] and needs one topic row per node, got {homophily}"
        )));
    }
    if m == 0 || m >= n {
        return Err(SynthError::Config(format!("preferential attachment needs 0 < m < n, got m={m}, n={n}")));
    }
    let mut edges = Vec::with_capacity(m * (n - m) + m * (m - 1) / 2);
    // every edge endpoint, so a uniform pick is a degree-proportional pick
    let mut ends: Vec<usize> = Vec::with_capacity(2 * edges.capacity());
    for u in 0..m {
        for v in u + 1..m {
            edges.push((u, v));
            ends.extend([u, v]);
        }
    }
    let mut chosen = Vec::with_capacity(m);
    for new in m..n {
        chosen.clear();
        while chosen.len() < m {
            let draw = |rng: &mut R| {
                if ends.is_empty() {
                    rng.random_range(0..new)
                } else {
                    ends[rng.random_range(0..ends.len())]
                }
            };
            let target = match topics {
                Some(r) if homophily > 0.0 && rng.random::<f64>() < homophily => {
                    let cands: Vec<usize> = (0..HOMOPHILY_CANDIDATES).map(|_| draw(rng)).collect();
                    let w: Vec<f64> = cands.iter().map(|&c| r.row(new).dot(&r.row(c)) + 1e-9).collect();
                    let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
                    let mut pick = cands[cands.len() - 1];
                    for (c, wc) in cands.iter().zip(&w) {
                        if u < *wc {
                            pick = *c;
                            break;
                        }
                        u -= wc;
                    }
                    pick
                }
                _ => draw(rng),
            };
            if !chosen.contains(&target) {
                chosen.push(target);
            }
        }
        for &t in &chosen {
            edges.push((t, new));
            ends.extend([t, new]);
        }
    }
    Ok(edges)
}

/// Planted-partition graph: node `i` belongs to block `i * blocks / n`;
/// pairs inside a block link with probability `p_in`, across blocks `p_out`.
pub fn block_model<R: Rng + ?Sized>(
    n: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>, SynthError> {
    if blocks == 0 || blocks > n || !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err(SynthError::Config(format!(
            "block model needs 1 <= blocks <= n and probabilities in [0, 1], got blocks={blocks}, p_in={p_in}, p_out={p_out}"
        )));
    }
    let block = |i: usize| i * blocks / n;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block(u) == block(v) { p_in } else { p_out };
            if p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p) {
                edges.push((u, v));
            }
        }
    }
    Ok(edges)
}

/// Gini coefficient of a non-negative sample.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let weighted: f64 = v.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
    2.0 * weighted / (n as f64 * total) - (n as f64 + 1.0) / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Adjacency;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn degrees(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
        let adj = Adjacency::from_edges(n, edges, true).unwrap();
        (0..n).map(|i| adj.degree(i) as f64).collect()
    }

    #[test]
    fn pa_edge_count_and_simplicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let edges = preferential_attachment(100, 2, &mut rng).unwrap();
        assert_eq!(edges.len(), 2 * 98 + 1);
        let adj = Adjacency::from_edges(100, &edges, true).unwrap();
        assert_eq!(adj.n_entries(), 2 * edges.len());
        assert!(edges.iter().all(|&(u, v)| u != v));
        assert!(preferential_attachment(3, 3, &mut rng).is_err());
    }

    #[test]
    fn two_cliques() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let edges = block_model(8, 2, 1.0, 0.0, &mut rng).unwrap();
        assert_eq!(edges.len(), 2 * 6);
        assert!(edges.iter().all(|&(u, v)| (u < 4) == (v < 4)));
    }

    #[test]
    fn pa_degrees_heavier_tailed_than_uniform_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 2000;
        let pa = preferential_attachment(n, 3, &mut rng).unwrap();
        let density = 2.0 * pa.len() as f64 / (n * (n - 1)) as f64;
        let er = block_model(n, 1, density, 0.0, &mut rng).unwrap();
        let (g_pa, g_er) = (gini(&degrees(n, &pa)), gini(&degrees(n, &er)));
        assert!(g_pa > g_er, "pa {g_pa} vs er {g_er}");
    }

    #[test]
    fn homophily_raises_neighbor_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1000;
        let r = ndarray::Array2::from_shape_fn((n, 5), |(i, j)| if i % 5 == j { 1.0 } else { 0.0 });
        let same = |edges: &[(usize, usize)]| {
            edges.iter().filter(|&&(u, v)| u % 5 == v % 5).count() as f64 / edges.len() as f64
        };
        let plain = homophilous_attachment(n, 3, Some(&r), 0.0, &mut rng).unwrap();
        let homo = homophilous_attachment(n, 3, Some(&r), 0.9, &mut rng).unwrap();
        assert_eq!(plain.len(), homo.len());
        assert!(same(&homo) > same(&plain) + 0.3, "{} vs {}", same(&homo), same(&plain));
    }

    #[test]
    fn gini_extremes() {
        assert_eq!(gini(&[1.0, 1.0, 1.0]), 0.0);
        assert!((gini(&[0.0, 0.0, 0.0, 4.0]) - 0.75).abs() < 1e-12);
    }
}
