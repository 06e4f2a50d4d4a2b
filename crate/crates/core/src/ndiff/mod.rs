//! Dense reverse-mode automatic differentiation.
//!
//! A [`Tape`] records operations on `f64` matrices; [`Tape::backward`] sweeps
//! the record in reverse to produce [`Gradients`]. Parameters live in a
//! [`ParamStore`] keyed by name, which is also the unit of checkpointing and
//! of optimizer state.

mod checkpoint;
mod gradcheck;
mod init;
mod optim;
mod sparse;
mod tape;

use indexmap::IndexMap;
use ndarray::Array2;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, relative_error};
pub use init::{xavier_init, xavier_uniform};
pub use optim::{Optimizer, OptimizerKind};
pub use sparse::{Segments, SparsePattern};
pub use tape::{sigmoid, Gradients, Tape, Var, PROB_EPS};

pub type Matrix = Array2<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NdiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("segment {0} is empty")]
    EmptySegment(usize),
    #[error("index {index} out of range for {op} (length {len})")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
    #[error("loss must be a 1x1 scalar, got shape {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("unknown parameter `{0}`")]
    MissingParam(String),
    #[error("{0}")]
    InvalidArgument(String),
}

/// Named parameter tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: IndexMap<String, Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Euclidean norm over every entry of every tensor.
    pub fn l2_norm(&self) -> f64 {
        self.tensors.values().flat_map(|m| m.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Total number of scalar entries.
    pub fn n_scalars(&self) -> usize {
        self.tensors.values().map(|m| m.len()).sum()
    }
}
