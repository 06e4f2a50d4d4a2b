use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use crate::graph::Adjacency;
use crate::ndiff::{xavier_uniform, Matrix, NdiffError, ParamStore, Segments, SparsePattern, Tape, Var};

/// Message-passing structure: row `i` aggregates over `ne(i) ∪ {i}`.
#[derive(Debug, Clone)]
pub struct MessageGraph {
    pattern: Arc<SparsePattern>,
    segments: Arc<Segments>,
    rows: Arc<[usize]>,
    cols: Arc<[usize]>,
    gcn_weights: Arc<Matrix>,
}

impl MessageGraph {
    pub fn new(adj: &Adjacency) -> Self {
        let n = adj.n_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(adj.n_entries() + n);
        offsets.push(0);
        for i in 0..n {
            let ne = adj.neighbors(i);
            let at = ne.partition_point(|&j| j < i);
            cols.extend_from_slice(&ne[..at]);
            cols.push(i);
            cols.extend_from_slice(&ne[at..]);
            offsets.push(cols.len());
        }
        let pattern = SparsePattern::new(n, offsets, cols).expect("adjacency yields a valid pattern");
        let deg: Vec<f64> = (0..n).map(|i| pattern.row(i).len() as f64).collect();
        let gcn = Array2::from_shape_fn((pattern.nnz(), 1), |(e, _)| {
            1.0 / (deg[pattern.rows()[e]] * deg[pattern.cols()[e]]).sqrt()
        });
        Self {
            segments: Arc::new(pattern.segments().clone()),
            rows: pattern.rows().into(),
            cols: pattern.cols().into(),
            pattern: Arc::new(pattern),
            gcn_weights: Arc::new(gcn),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.pattern.n_rows()
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    /// `D̂^{-1/2} Â D̂^{-1/2}` entries in pattern order.
    pub fn gcn_weights(&self) -> &Matrix {
        &self.gcn_weights
    }
}

fn bind(tape: &mut Tape, store: &ParamStore, name: &str) -> Result<Var, NdiffError> {
    tape.param(store, name)
}

/// Parameters of one breadth (attention) layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BreadthLayerParams {
    pub w: Matrix,
    pub ws: Matrix,
    pub wd: Matrix,
    /// Attention vector stored as an `a × 1` column.
    pub v: Matrix,
}

/// Gate weights of one depth aggregator.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthAggregatorParams {
    pub wi: Matrix,
    pub wf: Matrix,
    pub wo: Matrix,
    pub wc: Matrix,
}

/// Parameters of one single-head GAT layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayerParams {
    pub w: Matrix,
    pub a_src: Matrix,
    pub a_dst: Matrix,
}

impl BreadthLayerParams {
    pub fn xavier<R: Rng + ?Sized>(f_in: usize, f_out: usize, a: usize, rng: &mut R) -> Result<Self, NdiffError> {
        Ok(Self {
            w: xavier_uniform(f_in, f_out, rng)?,
            ws: xavier_uniform(f_in, a, rng)?,
            wd: xavier_uniform(f_in, a, rng)?,
            v: xavier_uniform(a, 1, rng)?,
        })
    }

    pub fn store(self, prefix: &str, store: &mut ParamStore) {
        store.insert(format!("{prefix}.W"), self.w);
        store.insert(format!("{prefix}.Ws"), self.ws);
        store.insert(format!("{prefix}.Wd"), self.wd);
        store.insert(format!("{prefix}.v"), self.v);
    }

    pub fn to_store(&self, prefix: &str) -> ParamStore {
        let mut s = ParamStore::new();
        self.clone().store(prefix, &mut s);
        s
    }
}

impl DepthAggregatorParams {
    pub fn xavier<R: Rng + ?Sized>(f: usize, rng: &mut R) -> Result<Self, NdiffError> {
        Ok(Self {
            wi: xavier_uniform(f, f, rng)?,
            wf: xavier_uniform(f, f, rng)?,
            wo: xavier_uniform(f, f, rng)?,
            wc: xavier_uniform(f, f, rng)?,
        })
    }

    pub fn store(self, prefix: &str, store: &mut ParamStore) {
        store.insert(format!("{prefix}.Wi"), self.wi);
        store.insert(format!("{prefix}.Wf"), self.wf);
        store.insert(format!("{prefix}.Wo"), self.wo);
        store.insert(format!("{prefix}.Wc"), self.wc);
    }

    pub fn to_store(&self, prefix: &str) -> ParamStore {
        let mut s = ParamStore::new();
        self.clone().store(prefix, &mut s);
        s
    }
}

impl GatLayerParams {
    pub fn xavier<R: Rng + ?Sized>(f_in: usize, f_out: usize, rng: &mut R) -> Result<Self, NdiffError> {
        Ok(Self {
            w: xavier_uniform(f_in, f_out, rng)?,
            a_src: xavier_uniform(f_out, 1, rng)?,
            a_dst: xavier_uniform(f_out, 1, rng)?,
        })
    }

    pub fn store(self, prefix: &str, store: &mut ParamStore) {
        store.insert(format!("{prefix}.W"), self.w);
        store.insert(format!("{prefix}.as"), self.a_src);
        store.insert(format!("{prefix}.ad"), self.a_dst);
    }

    pub fn to_store(&self, prefix: &str) -> ParamStore {
        let mut s = ParamStore::new();
        self.clone().store(prefix, &mut s);
        s
    }
}

/// Attention weights `α(i, j)` over every pattern entry, softmax-normalized
/// per row: `softmax_j v·tanh(W_s h_i + W_d h_j)`.
pub fn attention(
    tape: &mut Tape,
    h: Var,
    graph: &MessageGraph,
    store: &ParamStore,
    prefix: &str,
) -> Result<Var, NdiffError> {
    let ws = bind(tape, store, &format!("{prefix}.Ws"))?;
    let wd = bind(tape, store, &format!("{prefix}.Wd"))?;
    let v = bind(tape, store, &format!("{prefix}.v"))?;
    let src = tape.matmul(h, ws)?;
    let dst = tape.matmul(h, wd)?;
    let logits = tape.additive_score(src, dst, v, graph.pattern.clone())?;
    tape.segment_softmax(logits, graph.segments.clone())
}

/// `h̃_i = tanh(Σ_j α(i, j) h_j W)`.
pub fn breadth(
    tape: &mut Tape,
    h: Var,
    graph: &MessageGraph,
    store: &ParamStore,
    prefix: &str,
) -> Result<Var, NdiffError> {
    let alpha = attention(tape, h, graph, store, prefix)?;
    let w = bind(tape, store, &format!("{prefix}.W"))?;
    let hw = tape.matmul(h, w)?;
    let agg = tape.aggregate(alpha, hw, graph.pattern.clone())?;
    tape.tanh(agg)
}

/// Gated memory update. `c = None` stands for a zero cell state.
pub fn depth(
    tape: &mut Tape,
    h_tilde: Var,
    c: Option<Var>,
    store: &ParamStore,
    prefix: &str,
) -> Result<(Var, Var), NdiffError> {
    let gate = |tape: &mut Tape, name: &str| -> Result<Var, NdiffError> {
        let w = bind(tape, store, &format!("{prefix}.{name}"))?;
        tape.matmul(h_tilde, w)
    };
    let zi = gate(tape, "Wi")?;
    let zc = gate(tape, "Wc")?;
    let zo = gate(tape, "Wo")?;
    let i = tape.sigmoid(zi)?;
    let c_cand = tape.tanh(zc)?;
    let o = tape.sigmoid(zo)?;
    let mut c_new = tape.mul(i, c_cand)?;
    if let Some(c) = c {
        let zf = gate(tape, "Wf")?;
        let f = tape.sigmoid(zf)?;
        let keep = tape.mul(f, c)?;
        c_new = tape.add(keep, c_new)?;
    }
    let tc = tape.tanh(c_new)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c_new))
}

/// `tanh(D̂^{-1/2} Â D̂^{-1/2} H W)`.
pub fn gcn(tape: &mut Tape, h: Var, graph: &MessageGraph, store: &ParamStore, prefix: &str) -> Result<Var, NdiffError> {
    let w = bind(tape, store, &format!("{prefix}.W"))?;
    let hw = tape.matmul(h, w)?;
    let norm = tape.constant((*graph.gcn_weights).clone());
    let agg = tape.aggregate(norm, hw, graph.pattern.clone())?;
    tape.tanh(agg)
}

/// GAT attention weights: `softmax_j LeakyReLU(a_s·Wh_i + a_d·Wh_j)`.
pub fn gat_attention(
    tape: &mut Tape,
    hw: Var,
    graph: &MessageGraph,
    store: &ParamStore,
    prefix: &str,
) -> Result<Var, NdiffError> {
    let a_src = bind(tape, store, &format!("{prefix}.as"))?;
    let a_dst = bind(tape, store, &format!("{prefix}.ad"))?;
    let s = tape.matmul(hw, a_src)?;
    let d = tape.matmul(hw, a_dst)?;
    let se = tape.gather_rows(s, graph.rows.clone())?;
    let de = tape.gather_rows(d, graph.cols.clone())?;
    let logits = tape.add(se, de)?;
    let logits = tape.leaky_relu(logits, 0.2)?;
    tape.segment_softmax(logits, graph.segments.clone())
}

pub fn gat(tape: &mut Tape, h: Var, graph: &MessageGraph, store: &ParamStore, prefix: &str) -> Result<Var, NdiffError> {
    let w = bind(tape, store, &format!("{prefix}.W"))?;
    let hw = tape.matmul(h, w)?;
    let alpha = gat_attention(tape, hw, graph, store, prefix)?;
    let agg = tape.aggregate(alpha, hw, graph.pattern.clone())?;
    tape.tanh(agg)
}

fn eval<F>(h: &Matrix, f: F) -> Result<Matrix, NdiffError>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var, NdiffError>,
{
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let out = f(&mut tape, hv)?;
    Ok(tape.value(out).clone())
}

/// Attention weights per pattern entry (`nnz × 1`, rows of
/// [`MessageGraph::pattern`] in storage order).
pub fn attention_coefficients(
    h: &Matrix,
    graph: &MessageGraph,
    params: &BreadthLayerParams,
) -> Result<Matrix, NdiffError> {
    let store = params.to_store("p");
    eval(h, |t, hv| attention(t, hv, graph, &store, "p"))
}

pub fn breadth_layer(h: &Matrix, graph: &MessageGraph, params: &BreadthLayerParams) -> Result<Matrix, NdiffError> {
    let store = params.to_store("p");
    eval(h, |t, hv| breadth(t, hv, graph, &store, "p"))
}

/// Returns `(H, C')`.
pub fn depth_aggregate(
    h_tilde: &Matrix,
    c: &Matrix,
    params: &DepthAggregatorParams,
) -> Result<(Matrix, Matrix), NdiffError> {
    let store = params.to_store("p");
    let mut tape = Tape::new();
    let hv = tape.constant(h_tilde.clone());
    let cv = tape.constant(c.clone());
    let (h, c_new) = depth(&mut tape, hv, Some(cv), &store, "p")?;
    Ok((tape.value(h).clone(), tape.value(c_new).clone()))
}

pub fn gcn_layer(h: &Matrix, graph: &MessageGraph, w: &Matrix) -> Result<Matrix, NdiffError> {
    let mut store = ParamStore::new();
    store.insert("p.W", w.clone());
    eval(h, |t, hv| gcn(t, hv, graph, &store, "p"))
}

pub fn gat_layer(h: &Matrix, graph: &MessageGraph, params: &GatLayerParams) -> Result<Matrix, NdiffError> {
    let store = params.to_store("p");
    eval(h, |t, hv| gat(t, hv, graph, &store, "p"))
}

pub fn gat_coefficients(h: &Matrix, graph: &MessageGraph, params: &GatLayerParams) -> Result<Matrix, NdiffError> {
    let store = params.to_store("p");
    eval(h, |t, hv| {
        let w = t.param(&store, "p.W")?;
        let hw = t.matmul(hv, w)?;
        gat_attention(t, hw, graph, &store, "p")
    })
}
