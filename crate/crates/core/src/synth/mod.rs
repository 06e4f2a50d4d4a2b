//! Semi-synthetic networked uplift data.
//!
//! Node topics come from a sparse Dirichlet, features are bag-of-words counts
//! sampled from those topics, and the graph is grown by preferential
//! attachment or drawn from a block model. Treatment preference mixes each
//! node's similarity to a "treated" centroid with its neighbors' similarities:
//!
//! ```text
//! p1_i = κ1 r_iᵀ c1 + κ2 Σ_{j∈N(i)} r_jᵀ c1        Pr(t_i = 1) = softmax(p1_i, p0_i)
//! p0_i = κ1 r_iᵀ c0 + κ2 Σ_{j∈N(i)} r_jᵀ c0
//! y_i(1) = C (p0_i + p1_i) + ε₁       y_i(0) = C p0_i + ε₀
//! ```
//!
//! so the true uplift of node `i` is `C·p1_i` plus noise.

mod graphs;
mod outcomes;
mod topics;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Adjacency, DatasetParts, GraphDataset, GraphError, Propensity};

pub use graphs::{block_model, gini, homophilous_attachment, preferential_attachment};
pub use outcomes::{
    assign_treatments, binarize, gen_outcomes, randomize_treatments, treatment_model, BinaryOutcomes, Outcomes,
    TreatmentModel,
};
pub use topics::{dirichlet, gen_topics, TopicModel};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("degenerate outcomes: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphModel {
    /// Preferential attachment with `pa_m` edges per new node.
    Pa,
    /// Planted partition with `blocks`, `p_in`, `p_out`.
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreatmentMode {
    /// Assignment driven by topics and neighbors through κ1 and κ2.
    Confounded,
    /// i.i.d. Bernoulli(`treat_prob`).
    Randomized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropensityColumn {
    /// No propensity stored; consumers fall back to the treated fraction.
    None,
    /// Store the true assignment probability of every node.
    True,
}

/// Every knob of the generator. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_nodes: usize,
    pub graph: GraphModel,
    pub pa_m: usize,
    /// Share of attachment links that prefer topically similar nodes.
    pub homophily: f64,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub n_topics: usize,
    pub feature_dim: usize,
    pub words_per_node: usize,
    pub dirichlet_alpha: f64,
    pub c: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub noise_sd: f64,
    pub treatment: TreatmentMode,
    pub treat_prob: f64,
    pub propensity: PropensityColumn,
    pub binary: bool,
    pub monotone: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_nodes: 5000,
            graph: GraphModel::Pa,
            pa_m: 5,
            homophily: 0.5,
            blocks: 10,
            p_in: 0.02,
            p_out: 0.0005,
            n_topics: 10,
            feature_dim: 100,
            words_per_node: 50,
            dirichlet_alpha: 0.1,
            c: 5.0,
            kappa1: 10.0,
            kappa2: 0.5,
            noise_sd: 1.0,
            treatment: TreatmentMode::Confounded,
            treat_prob: 0.5,
            propensity: PropensityColumn::True,
            binary: false,
            monotone: false,
            threshold: None,
        }
    }
}

/// Names accepted by [`SynthConfig::preset`].
pub const SYNTH_PRESETS: [&str; 3] = ["desk", "desk-binary", "toy"];

impl SynthConfig {
    /// Built-in generator settings.
    ///
    /// * `desk`: 5K nodes, C = 5, κ1 = 10, κ2 = 0.5, continuous outcomes.
    /// * `desk-binary`: `desk` with outcomes thresholded monotonically.
    /// * `toy`: 60 nodes with short feature vectors.
    pub fn preset(name: &str) -> Result<Self, SynthError> {
        let desk = Self::default();
        match name {
            "desk" => Ok(desk),
            "desk-binary" => Ok(Self { binary: true, monotone: true, ..desk }),
            "toy" => Ok(Self { n_nodes: 60, pa_m: 2, n_topics: 4, feature_dim: 16, words_per_node: 20, ..desk }),
            other => Err(SynthError::Config(format!("unknown preset `{other}` (expected one of {SYNTH_PRESETS:?})"))),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::Config(msg));
        if self.n_nodes < 2 {
            return bad(format!("n_nodes must be at least 2, got {}", self.n_nodes));
        }
        if !(self.kappa1 >= 0.0 && self.kappa2 >= 0.0) {
            return bad(format!("kappa1 and kappa2 must be >= 0, got {} and {}", self.kappa1, self.kappa2));
        }
        if !(self.c > 0.0) {
            return bad(format!("c must be > 0, got {}", self.c));
        }
        if self.n_topics == 0 || self.n_topics > self.feature_dim {
            return bad(format!("need 0 < n_topics <= feature_dim, got {} and {}", self.n_topics, self.feature_dim));
        }
        if !(self.noise_sd >= 0.0) {
            return bad(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        if self.monotone && !self.binary {
            return bad("monotone requires binary = true".into());
        }
        if self.treatment == TreatmentMode::Randomized && !(self.treat_prob > 0.0 && self.treat_prob < 1.0) {
            return bad(format!("treat_prob must be in (0, 1), got {}", self.treat_prob));
        }
        Ok(())
    }

    /// Flat `key → value` rendering, used as dataset provenance.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let value = toml::Value::try_from(self).expect("config serializes");
        let table = value.as_table().expect("config is a table");
        table
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), s)
            })
            .collect()
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// A generated dataset together with the latent quantities behind it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: GraphDataset,
    pub topics: TopicModel,
    pub treatment: TreatmentModel,
    /// Continuous potential outcomes before any binarization.
    pub continuous: Outcomes,
    pub threshold: Option<f64>,
}

pub fn edges_for(config: &SynthConfig, topics: &TopicModel) -> Result<Vec<(usize, usize)>, SynthError> {
    let mut rng = config.rng(1);
    match config.graph {
        GraphModel::Pa => {
            homophilous_attachment(config.n_nodes, config.pa_m, Some(&topics.proportions), config.homophily, &mut rng)
        }
        GraphModel::Block => block_model(config.n_nodes, config.blocks, config.p_in, config.p_out, &mut rng),
    }
}

/// Run the full recipe. Graph, topics, assignment and noise use separate
/// random streams derived from `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<Generated, SynthError> {
    config.validate()?;
    let n = config.n_nodes;
    let (features, topics) = gen_topics(
        n,
        config.n_topics,
        config.feature_dim,
        config.words_per_node,
        config.dirichlet_alpha,
        &mut config.rng(2),
    )?;
    let edges = edges_for(config, &topics)?;
    let adj = Adjacency::from_edges(n, &edges, true)?;
    let tm = treatment_model(&topics, &adj, config.kappa1, config.kappa2);
    let (t, prob) = match config.treatment {
        TreatmentMode::Confounded => (assign_treatments(&tm.prob, &mut config.rng(3)), tm.prob.clone()),
        TreatmentMode::Randomized => {
            (randomize_treatments(n, config.treat_prob, &mut config.rng(3))?, vec![config.treat_prob; n])
        }
    };
    let continuous = gen_outcomes(&tm.p0, &tm.p1, &t, config.c, config.noise_sd, &mut config.rng(4))?;
    let (y1, y0, obs, threshold) = if config.binary {
        let b = binarize(&continuous.y1, &continuous.y0, &t, config.threshold, config.monotone)?;
        (b.y1, b.y0, b.observed, Some(b.threshold))
    } else {
        (continuous.y1.clone(), continuous.y0.clone(), continuous.factual.clone(), None)
    };

    let mut metadata = IndexMap::new();
    metadata.insert("generator".to_string(), format!("gnum-synth {}", env!("CARGO_PKG_VERSION")));
    for (k, v) in config.to_pairs() {
        metadata.insert(format!("synth.{k}"), v);
    }
    metadata.insert("synth.anchor_node".to_string(), topics.anchor.to_string());
    if let Some(th) = threshold {
        metadata.insert("synth.applied_threshold".to_string(), format!("{th:?}"));
    }
    let propensity = match (config.propensity, config.treatment) {
        (PropensityColumn::None, _) => None,
        (PropensityColumn::True, TreatmentMode::Randomized) => Some(Propensity::Constant(config.treat_prob)),
        (PropensityColumn::True, TreatmentMode::Confounded) => {
            // keep stored values strictly inside (0, 1)
            let eps = 1e-12;
            Some(Propensity::PerNode(prob.iter().map(|p| p.clamp(eps, 1.0 - eps)).collect()))
        }
    };
    let treated = t.iter().filter(|&&x| x == 1).count();
    if propensity.is_none() && (treated == 0 || treated == n) {
        return Err(SynthError::Degenerate(format!("{treated} of {n} nodes treated; both arms are required")));
    }
    let dataset = GraphDataset::new(DatasetParts {
        features,
        edges,
        treatment: t,
        outcome_obs: obs,
        outcome_t: Some(y1),
        outcome_c: Some(y0),
        propensity,
        metadata,
        symmetrize: true,
    })?;
    Ok(Generated { dataset, topics, treatment: tm, continuous, threshold })
}
