//! Graph encoders mapping node features and adjacency to embeddings.
//!
//! The default backbone stacks, per layer, an attention-weighted neighborhood
//! aggregation ("breadth") followed by a gated memory update across layers
//! ("depth"). GCN and single-head GAT stacks are available for comparison.

mod layers;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::ndiff::{Matrix, NdiffError, ParamStore, Tape, Var};

pub use layers::{
    attention, attention_coefficients, breadth, breadth_layer, depth, depth_aggregate, gat, gat_attention,
    gat_coefficients, gat_layer, gcn, gcn_layer, BreadthLayerParams, DepthAggregatorParams, GatLayerParams,
    MessageGraph,
};

#[derive(Debug, thiserror::Error)]
pub enum GnnError {
    #[error("invalid encoder configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ndiff(#[from] NdiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    Gnum,
    Gcn,
    Gat,
}

impl Backbone {
    pub fn as_str(self) -> &'static str {
        match self {
            Backbone::Gnum => "gnum",
            Backbone::Gcn => "gcn",
            Backbone::Gat => "gat",
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backbone {
    type Err = GnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gnum" => Ok(Backbone::Gnum),
            "gcn" => Ok(Backbone::Gcn),
            "gat" => Ok(Backbone::Gat),
            other => Err(GnnError::Config(format!("unknown backbone `{other}` (expected gnum, gcn or gat)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub backbone: Backbone,
    /// Output width of each layer; the layer count is `widths.len()`.
    pub widths: Vec<usize>,
    /// Attention dimension for breadth layers. `None` uses each layer's input width.
    pub attention_dim: Option<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { backbone: Backbone::Gnum, widths: vec![128, 64], attention_dim: None }
    }
}

/// A configured encoder stack for a fixed input width.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    input_dim: usize,
}

impl Encoder {
    pub fn new(config: EncoderConfig, input_dim: usize) -> Result<Self, GnnError> {
        if config.widths.is_empty() {
            return Err(GnnError::Config("at least one layer is required".into()));
        }
        if input_dim == 0 || config.widths.contains(&0) || config.attention_dim == Some(0) {
            return Err(GnnError::Config(format!(
                "widths must be positive (input {input_dim}, layers {:?}, attention {:?})",
                config.widths, config.attention_dim
            )));
        }
        Ok(Self { config, input_dim })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        *self.config.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.config.widths.len()
    }

    fn layer_dims(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let ins = std::iter::once(self.input_dim).chain(self.config.widths.iter().copied());
        ins.zip(self.config.widths.iter().copied()).enumerate().map(|(l, (i, o))| (l, i, o))
    }

    pub fn prefix(&self, layer: usize) -> String {
        format!("{}.l{layer}", self.config.backbone)
    }

    /// Expected parameter names and shapes, in insertion order.
    pub fn param_shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        for (l, f_in, f_out) in self.layer_dims() {
            let p = self.prefix(l);
            match self.config.backbone {
                Backbone::Gnum => {
                    let a = self.config.attention_dim.unwrap_or(f_in);
                    out.push((format!("{p}.W"), (f_in, f_out)));
                    out.push((format!("{p}.Ws"), (f_in, a)));
                    out.push((format!("{p}.Wd"), (f_in, a)));
                    out.push((format!("{p}.v"), (a, 1)));
                    for g in ["Wi", "Wf", "Wo", "Wc"] {
                        out.push((format!("{p}.{g}"), (f_out, f_out)));
                    }
                }
                Backbone::Gcn => out.push((format!("{p}.W"), (f_in, f_out))),
                Backbone::Gat => {
                    out.push((format!("{p}.W"), (f_in, f_out)));
                    out.push((format!("{p}.as"), (f_out, 1)));
                    out.push((format!("{p}.ad"), (f_out, 1)));
                }
            }
        }
        out
    }

    /// Xavier-initialize every encoder parameter into `store`.
    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) -> Result<(), GnnError> {
        for (l, f_in, f_out) in self.layer_dims() {
            let p = self.prefix(l);
            match self.config.backbone {
                Backbone::Gnum => {
                    let a = self.config.attention_dim.unwrap_or(f_in);
                    BreadthLayerParams::xavier(f_in, f_out, a, rng)?.store(&p, store);
                    DepthAggregatorParams::xavier(f_out, rng)?.store(&p, store);
                }
                Backbone::Gcn => store.insert(format!("{p}.W"), crate::ndiff::xavier_uniform(f_in, f_out, rng)?),
                Backbone::Gat => GatLayerParams::xavier(f_in, f_out, rng)?.store(&p, store),
            }
        }
        Ok(())
    }

    /// Verify that `store` holds every encoder parameter with the right shape.
    pub fn check_params(&self, store: &ParamStore) -> Result<(), GnnError> {
        for (name, shape) in self.param_shapes() {
            match store.get(&name) {
                None => return Err(GnnError::Config(format!("missing parameter `{name}`"))),
                Some(m) if m.dim() != shape => {
                    return Err(GnnError::Config(format!(
                        "parameter `{name}` has shape {:?}, expected {shape:?}",
                        m.dim()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Record the forward pass on `tape`, returning `H^(L)`.
    pub fn forward(&self, tape: &mut Tape, x: Var, graph: &MessageGraph, store: &ParamStore) -> Result<Var, GnnError> {
        if tape.shape(x) != (graph.n_nodes(), self.input_dim) {
            return Err(GnnError::Config(format!(
                "features have shape {:?}, encoder expects ({}, {})",
                tape.shape(x),
                graph.n_nodes(),
                self.input_dim
            )));
        }
        let mut h = x;
        let mut cell: Option<Var> = None;
        let mut prev_width = None;
        for (l, _, f_out) in self.layer_dims() {
            let p = self.prefix(l);
            h = match self.config.backbone {
                Backbone::Gnum => {
                    let h_tilde = breadth(tape, h, graph, store, &p)?;
                    // The cell state cannot carry across a width change.
                    let c_in = if prev_width == Some(f_out) { cell } else { None };
                    let (h_new, c_new) = depth(tape, h_tilde, c_in, store, &p)?;
                    cell = Some(c_new);
                    h_new
                }
                Backbone::Gcn => gcn(tape, h, graph, store, &p)?,
                Backbone::Gat => gat(tape, h, graph, store, &p)?,
            };
            prev_width = Some(f_out);
        }
        Ok(h)
    }

    /// Embeddings for every node with frozen parameters.
    pub fn encode(&self, features: &Matrix, graph: &MessageGraph, store: &ParamStore) -> Result<Matrix, GnnError> {
        self.check_params(store)?;
        let mut tape = Tape::new();
        let x = tape.constant(features.clone());
        let h = self.forward(&mut tape, x, graph, store)?;
        Ok(tape.value(h).clone())
    }
}
