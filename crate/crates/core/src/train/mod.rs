//! Training loops, checkpoints, evaluation and experiment sweeps.
//!
//! Every graph estimator runs the encoder over the whole graph and computes
//! its loss on a mini-batch of labeled nodes, so gradients of one step flow
//! through every node's embedding. Baselines see only node features.

mod eval;
mod fit;
mod model;
mod sweep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::estimators::{Estimator, EstimatorError};
use crate::gnn::{Backbone, GnnError};
use crate::graph::GraphError;
use crate::metrics::MetricsError;
use crate::ndiff::NdiffError;

pub use eval::{evaluate, EvalOptions};
pub use fit::{train, Objective, TrainHistory, TrainOutcome};
pub use model::{load_model, save_model, Model, Normalizer};
pub use sweep::{kappa_sweep, run_jobs, scarcity_sweep, KappaRow, ScarcityRow, SweepTable};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String, last_finite: Box<Option<Model>> },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Ndiff(#[from] NdiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Node encoder in front of the head. `None` feeds raw features to the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Gnum,
    Gcn,
    Gat,
    None,
}

impl Arch {
    pub fn backbone(self) -> Option<Backbone> {
        match self {
            Arch::Gnum => Some(Backbone::Gnum),
            Arch::Gcn => Some(Backbone::Gcn),
            Arch::Gat => Some(Backbone::Gat),
            Arch::None => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Gnum => "gnum",
            Arch::Gcn => "gcn",
            Arch::Gat => "gat",
            Arch::None => "none",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gnum" => Ok(Arch::Gnum),
            "gcn" => Ok(Arch::Gcn),
            "gat" => Ok(Arch::Gat),
            "none" => Ok(Arch::None),
            other => Err(format!("unknown backbone `{other}` (expected gnum, gcn, gat or none)")),
        }
    }
}

/// Every training knob. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub estimator: Estimator,
    pub backbone: Arch,
    /// Encoder layer widths.
    pub widths: Vec<usize>,
    /// Attention width of breadth layers; 0 uses each layer's input width.
    pub attention_dim: usize,
    /// Hidden widths of the Two-Model and CTM perceptrons.
    pub baseline_hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 weight-decay coefficient λ.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without validation-loss improvement before stopping; 0 disables.
    pub patience: usize,
    /// Squash the class-transformed head through a sigmoid.
    pub head_sigmoid: bool,
    /// Z-score feature columns and regression targets before fitting.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset("full").expect("built-in preset")
    }
}

/// Names accepted by [`TrainConfig::preset`].
pub const PRESETS: [&str; 3] = ["full", "desk", "toy"];

impl TrainConfig {
    /// Built-in hyperparameter sets.
    ///
    /// * `full`: widths 128/64, 5 epochs, lr 1e-4, λ 5e-4, batch 256.
    /// * `desk`: the schedule used for the 5K-node synthetic experiments.
    /// * `toy`: tiny widths for smoke tests on a few dozen nodes.
    pub fn preset(name: &str) -> Result<Self, TrainError> {
        let full = Self {
            estimator: Estimator::Ct,
            backbone: Arch::Gnum,
            widths: vec![128, 64],
            attention_dim: 0,
            baseline_hidden: vec![64, 64],
            epochs: 5,
            learning_rate: 1e-4,
            weight_decay: 5e-4,
            batch_size: 256,
            seed: 0,
            patience: 3,
            head_sigmoid: false,
            standardize: true,
        };
        match name {
            "full" => Ok(full),
            "desk" => Ok(Self {
                widths: vec![32, 32],
                attention_dim: 16,
                baseline_hidden: vec![64, 64],
                epochs: 40,
                learning_rate: 3e-3,
                patience: 5,
                ..full
            }),
            "toy" => Ok(Self {
                widths: vec![8, 8],
                baseline_hidden: vec![8, 8],
                epochs: 20,
                learning_rate: 1e-2,
                batch_size: 16,
                patience: 0,
                ..full
            }),
            other => Err(TrainError::Config(format!("unknown preset `{other}` (expected one of {PRESETS:?})"))),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad(format!("epochs and batch_size must be positive, got {} and {}", self.epochs, self.batch_size));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return bad(format!(
                "learning_rate must be > 0 and weight_decay >= 0, got {} and {}",
                self.learning_rate, self.weight_decay
            ));
        }
        if self.estimator.uses_graph()
            && self.backbone != Arch::None
            && (self.widths.is_empty() || self.widths.contains(&0))
        {
            return bad(format!("encoder widths must be non-empty and positive, got {:?}", self.widths));
        }
        if !self.estimator.uses_graph() && self.baseline_hidden.contains(&0) {
            return bad(format!("baseline widths must be positive, got {:?}", self.baseline_hidden));
        }
        Ok(())
    }

    /// Flat `key → value` rendering for manifests and checkpoint metadata.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let value = toml::Value::try_from(self).expect("config serializes");
        value
            .as_table()
            .expect("config is a table")
            .iter()
            .map(|(k, v)| (k.clone(), v.as_str().map_or_else(|| v.to_string(), str::to_string)))
            .collect()
    }
}
