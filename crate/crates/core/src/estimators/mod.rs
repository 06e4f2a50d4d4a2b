//! Uplift estimators: heads and losses on top of node embeddings, plus the
//! feature-only baselines.
//!
//! * Class-transformed target (CT): regress `z = y(t - p) / (p(1 - p))`,
//!   whose conditional mean is the uplift; `τ̂ = ẑ`.
//! * Partial label (PL): two sigmoid classifiers over the 3-bit group code
//!   (always-positive A, persuadable B, never-positive C); `τ̂ = 1 - ŷ₁ - ŷ₂`.
//! * Two-Model: separate regressors per arm; `τ̂ = ŷ(1) - ŷ(0)`.
//! * CTM: one regressor on the transformed target, no graph.

mod heads;
mod labels;

pub use heads::{ct_loss, participating_pairs, pl_loss, LinearHead, Mlp};
pub use labels::{classifier_membership, partial_label, pl_uplift, transformed_target, PartialLabel, Role};

use std::fmt;
use std::str::FromStr;

use crate::ndiff::NdiffError;

#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error("propensity {p} at node {index} is outside (0, 1)")]
    Domain { index: usize, p: f64 },
    #[error("outcome {value} at node {index} is not binary; binarize the dataset first (e.g. `gnum gen` with binary = true)")]
    NonBinary { index: usize, value: f64 },
    #[error("invalid partial label code {0:?}")]
    InvalidCode([u8; 3]),
    #[error("{0}")]
    EmptyMask(String),
    #[error("length mismatch: {0}")]
    Length(String),
    #[error(transparent)]
    Ndiff(#[from] NdiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Ct,
    Pl,
    TwoModel,
    Ctm,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Ct => "ct",
            Estimator::Pl => "pl",
            Estimator::TwoModel => "two-model",
            Estimator::Ctm => "ctm",
        }
    }

    /// Whether the estimator runs on top of a graph encoder.
    pub fn uses_graph(self) -> bool {
        matches!(self, Estimator::Ct | Estimator::Pl)
    }

    pub fn requires_binary(self) -> bool {
        self == Estimator::Pl
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ct" => Ok(Estimator::Ct),
            "pl" => Ok(Estimator::Pl),
            "two-model" | "tm" => Ok(Estimator::TwoModel),
            "ctm" => Ok(Estimator::Ctm),
            other => Err(format!("unknown estimator `{other}` (expected ct, pl, two-model or ctm)")),
        }
    }
}
