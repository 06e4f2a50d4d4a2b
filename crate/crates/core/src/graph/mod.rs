//! Attributed social graph with treatment and outcome columns.

mod io;
mod split;

use indexmap::IndexMap;

use crate::ndiff::Matrix;

pub use io::{load_dataset, parse_dataset, save_dataset, write_dataset, LoadOptions};
pub use split::{make_splits, SplitFractions, SplitMasks};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("invalid dataset: {0}")]
    Validation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("node {index} out of range (N = {n})")]
    NodeOutOfRange { index: usize, n: usize },
}

/// Treatment probability used by the transformed target.
#[derive(Debug, Clone, PartialEq)]
pub enum Propensity {
    Constant(f64),
    PerNode(Vec<f64>),
}

impl Propensity {
    pub fn at(&self, i: usize) -> f64 {
        match self {
            Propensity::Constant(p) => *p,
            Propensity::PerNode(v) => v[i],
        }
    }
}

/// Compressed neighbor lists. Each list is sorted, deduplicated and never
/// contains its own node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Adjacency {
    /// Build from an edge list. With `symmetrize`, every `(u, v)` is stored in
    /// both directions; otherwise `v` is listed as a neighbor of `u` only.
    /// Self-loops and duplicates are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], symmetrize: bool) -> Result<Self, GraphError> {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::Validation(format!("edge ({u}, {v}) has an endpoint >= N = {n}")));
            }
            if u == v {
                continue;
            }
            lists[u].push(v);
            if symmetrize {
                lists[v].push(u);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut l in lists {
            l.sort_unstable();
            l.dedup();
            targets.extend(l);
            offsets.push(targets.len());
        }
        Ok(Self { offsets, targets })
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Number of stored (directed) adjacency entries.
    pub fn n_entries(&self) -> usize {
        self.targets.len()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n_nodes()).all(|i| self.neighbors(i).iter().all(|&j| self.neighbors(j).binary_search(&i).is_ok()))
    }

    /// Edge list with every stored entry `(i, j)`; for symmetric adjacency
    /// only pairs with `i < j` are returned.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let sym = self.is_symmetric();
        (0..self.n_nodes())
            .flat_map(|i| self.neighbors(i).iter().map(move |&j| (i, j)))
            .filter(|&(i, j)| !sym || i < j)
            .collect()
    }
}

/// Everything needed to build a [`GraphDataset`].
#[derive(Debug, Clone, Default)]
pub struct DatasetParts {
    pub features: Matrix,
    pub edges: Vec<(usize, usize)>,
    pub treatment: Vec<u8>,
    pub outcome_obs: Vec<f64>,
    pub outcome_t: Option<Vec<f64>>,
    pub outcome_c: Option<Vec<f64>>,
    pub propensity: Option<Propensity>,
    pub metadata: IndexMap<String, String>,
    pub symmetrize: bool,
}

/// Immutable attributed graph with per-node treatment and outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    features: Matrix,
    adjacency: Adjacency,
    n_edges: usize,
    treatment: Vec<u8>,
    outcome_obs: Vec<f64>,
    outcome_t: Option<Vec<f64>>,
    outcome_c: Option<Vec<f64>>,
    propensity: Option<Propensity>,
    metadata: IndexMap<String, String>,
}

impl GraphDataset {
    pub fn new(parts: DatasetParts) -> Result<Self, GraphError> {
        let n = parts.features.nrows();
        let check_len = |what: &str, len: usize| {
            if len != n {
                Err(GraphError::Validation(format!("{what} has {len} entries but there are {n} nodes")))
            } else {
                Ok(())
            }
        };
        check_len("treatment", parts.treatment.len())?;
        check_len("outcome", parts.outcome_obs.len())?;
        if let Some(&bad) = parts.treatment.iter().find(|&&t| t > 1) {
            return Err(GraphError::Validation(format!("treatment must be 0 or 1, got {bad}")));
        }
        if !parts.features.iter().chain(&parts.outcome_obs).all(|x| x.is_finite()) {
            return Err(GraphError::Validation("features and outcomes must be finite".into()));
        }
        match (&parts.outcome_t, &parts.outcome_c) {
            (Some(y1), Some(y0)) => {
                check_len("y(1)", y1.len())?;
                check_len("y(0)", y0.len())?;
                for i in 0..n {
                    let expected = if parts.treatment[i] == 1 { y1[i] } else { y0[i] };
                    if expected != parts.outcome_obs[i] {
                        return Err(GraphError::Validation(format!(
                            "node {i}: observed outcome {} disagrees with potential outcome {expected} under t={}",
                            parts.outcome_obs[i], parts.treatment[i]
                        )));
                    }
                }
            }
            (None, None) => {}
            _ => return Err(GraphError::Validation("y(1) and y(0) must be given together".into())),
        }
        match &parts.propensity {
            Some(Propensity::Constant(p)) if !(*p > 0.0 && *p < 1.0) => {
                return Err(GraphError::Validation(format!("propensity {p} outside (0, 1)")));
            }
            Some(Propensity::PerNode(v)) => {
                check_len("propensity", v.len())?;
                if let Some((i, p)) = v.iter().enumerate().find(|(_, p)| !(**p > 0.0 && **p < 1.0)) {
                    return Err(GraphError::Validation(format!("node {i}: propensity {p} outside (0, 1)")));
                }
            }
            _ => {}
        }
        let treated = parts.treatment.iter().filter(|&&t| t == 1).count();
        if parts.propensity.is_none() && (treated == 0 || treated == n) {
            return Err(GraphError::Validation(
                "empirical treatment rate is 0 or 1; both groups must be present".into(),
            ));
        }
        let adjacency = Adjacency::from_edges(n, &parts.edges, parts.symmetrize)?;
        let n_edges = if parts.symmetrize { adjacency.n_entries() / 2 } else { adjacency.n_entries() };
        Ok(Self {
            features: parts.features,
            adjacency,
            n_edges,
            treatment: parts.treatment,
            outcome_obs: parts.outcome_obs,
            outcome_t: parts.outcome_t,
            outcome_c: parts.outcome_c,
            propensity: parts.propensity,
            metadata: parts.metadata,
        })
    }

    /// Decompose back into parts (edges in canonical order).
    pub fn into_parts(self) -> DatasetParts {
        let symmetrize = self.adjacency.is_symmetric();
        DatasetParts {
            edges: self.adjacency.edge_list(),
            features: self.features,
            treatment: self.treatment,
            outcome_obs: self.outcome_obs,
            outcome_t: self.outcome_t,
            outcome_c: self.outcome_c,
            propensity: self.propensity,
            metadata: self.metadata,
            symmetrize,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.features.nrows()
    }

    /// Number of relationships: undirected pairs when symmetric, directed
    /// entries otherwise.
    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn outcome_obs(&self) -> &[f64] {
        &self.outcome_obs
    }

    pub fn outcome_t(&self) -> Option<&[f64]> {
        self.outcome_t.as_deref()
    }

    pub fn outcome_c(&self) -> Option<&[f64]> {
        self.outcome_c.as_deref()
    }

    pub fn metadata(&self) -> &IndexMap<String, String> {
        &self.metadata
    }

    /// True individual uplift `y(1) - y(0)`, when counterfactuals are known.
    pub fn true_uplift(&self) -> Option<Vec<f64>> {
        let (y1, y0) = (self.outcome_t.as_ref()?, self.outcome_c.as_ref()?);
        Some(y1.iter().zip(y0).map(|(a, b)| a - b).collect())
    }

    /// Explicitly stored propensity, if any.
    pub fn stored_propensity(&self) -> Option<&Propensity> {
        self.propensity.as_ref()
    }

    /// Stored propensity, or the treated fraction when none was given.
    pub fn propensity(&self) -> Propensity {
        self.propensity.clone().unwrap_or_else(|| Propensity::Constant(self.treated_fraction()))
    }

    pub fn treated_fraction(&self) -> f64 {
        self.treatment.iter().filter(|&&t| t == 1).count() as f64 / self.n_nodes() as f64
    }

    /// Whether every observed outcome is 0 or 1.
    pub fn has_binary_outcome(&self) -> bool {
        self.outcome_obs.iter().all(|&y| y == 0.0 || y == 1.0)
    }

    pub fn neighbors(&self, i: usize) -> Result<&[usize], GraphError> {
        self.check_node(i)?;
        Ok(self.adjacency.neighbors(i))
    }

    pub fn degree(&self, i: usize) -> Result<usize, GraphError> {
        self.check_node(i)?;
        Ok(self.adjacency.degree(i))
    }

    fn check_node(&self, i: usize) -> Result<(), GraphError> {
        if i >= self.n_nodes() {
            return Err(GraphError::NodeOutOfRange { index: i, n: self.n_nodes() });
        }
        Ok(())
    }

    /// Relabel nodes: old node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(GraphError::Validation("permutation is not a bijection on the node set".into()));
        }
        let move_vec = |v: &[f64]| {
            let mut out = vec![0.0; n];
            for (i, &x) in v.iter().enumerate() {
                out[perm[i]] = x;
            }
            out
        };
        let mut features = Matrix::zeros(self.features.dim());
        let mut treatment = vec![0u8; n];
        for i in 0..n {
            features.row_mut(perm[i]).assign(&self.features.row(i));
            treatment[perm[i]] = self.treatment[i];
        }
        let symmetric = self.adjacency.is_symmetric();
        let edges = self.adjacency.edge_list().into_iter().map(|(u, v)| (perm[u], perm[v])).collect();
        let propensity = self.propensity.as_ref().map(|p| match p {
            Propensity::Constant(c) => Propensity::Constant(*c),
            Propensity::PerNode(v) => Propensity::PerNode(move_vec(v)),
        });
        Self::new(DatasetParts {
            features,
            edges,
            treatment,
            outcome_obs: move_vec(&self.outcome_obs),
            outcome_t: self.outcome_t.as_deref().map(move_vec),
            outcome_c: self.outcome_c.as_deref().map(move_vec),
            propensity,
            metadata: self.metadata.clone(),
            symmetrize: symmetric,
        })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use ndarray::Array2;

    pub(crate) fn toy(n: usize, edges: &[(usize, usize)]) -> GraphDataset {
        GraphDataset::new(DatasetParts {
            features: Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64 * 0.1),
            edges: edges.to_vec(),
            treatment: (0..n).map(|i| (i % 2) as u8).collect(),
            outcome_obs: (0..n).map(|i| i as f64).collect(),
            symmetrize: true,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn triangle_neighbors() {
        let g = toy(4, &[(0, 1), (2, 0), (1, 2), (1, 0)]);
        assert_eq!(g.neighbors(0).unwrap(), &[1, 2]);
        assert_eq!(g.neighbors(3).unwrap(), &[] as &[usize]);
        assert_eq!(g.n_edges(), 3);
        assert!(matches!(g.neighbors(4), Err(GraphError::NodeOutOfRange { index: 4, n: 4 })));
    }

    #[test]
    fn self_loops_dropped() {
        let g = toy(3, &[(0, 0), (0, 1)]);
        for i in 0..3 {
            assert!(!g.neighbors(i).unwrap().contains(&i));
        }
    }

    #[test]
    fn symmetrize_is_idempotent() {
        let edges = [(0, 1), (3, 2), (1, 3), (2, 3)];
        let once = Adjacency::from_edges(4, &edges, true).unwrap();
        let twice = Adjacency::from_edges(4, &once.edge_list(), true).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn directed_mode_keeps_direction() {
        let a = Adjacency::from_edges(3, &[(0, 1), (1, 2)], false).unwrap();
        assert_eq!(a.neighbors(0), &[1]);
        assert_eq!(a.neighbors(1), &[2]);
        assert_eq!(a.neighbors(2), &[] as &[usize]);
        assert!(!a.is_symmetric());
    }

    #[test]
    fn consistency_violation_rejected() {
        let res = GraphDataset::new(DatasetParts {
            features: Array2::zeros((2, 1)),
            treatment: vec![1, 0],
            outcome_obs: vec![1.0, 0.0],
            outcome_t: Some(vec![2.0, 1.0]),
            outcome_c: Some(vec![0.0, 0.0]),
            symmetrize: true,
            ..Default::default()
        });
        assert!(matches!(res, Err(GraphError::Validation(_))));
    }

    #[test]
    fn propensity_range_checked() {
        let res = GraphDataset::new(DatasetParts {
            features: Array2::zeros((2, 1)),
            treatment: vec![1, 0],
            outcome_obs: vec![1.0, 0.0],
            propensity: Some(Propensity::PerNode(vec![0.5, 1.0])),
            ..Default::default()
        });
        assert!(res.is_err());
    }

    #[test]
    fn permutation_relabels() {
        let g = toy(4, &[(0, 1), (1, 2)]);
        let p = g.permuted(&[3, 2, 1, 0]).unwrap();
        assert_eq!(p.neighbors(3).unwrap(), &[2]);
        assert_eq!(p.neighbors(2).unwrap(), &[1, 3]);
        assert_eq!(p.outcome_obs()[3], 0.0);
        assert!(g.permuted(&[0, 0, 1, 2]).is_err());
    }
}
