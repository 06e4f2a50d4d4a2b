use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::estimators::{pl_uplift, Estimator, LinearHead, Mlp};
use crate::gnn::{Encoder, EncoderConfig, MessageGraph};
use crate::graph::GraphDataset;
use crate::ndiff::{read_checkpoint, write_checkpoint, Checkpoint, Matrix, ParamStore, Tape, Var};

use super::{Arch, TrainConfig, TrainError};

/// Feature and target scaling fitted before training and reapplied at
/// prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    /// Regression targets are fitted as `(target − y_shift) / y_scale`.
    pub y_shift: f64,
    pub y_scale: f64,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { x_mean: vec![0.0; dim], x_scale: vec![1.0; dim], y_shift: 0.0, y_scale: 1.0 }
    }

    /// Column means and standard deviations of `x`; constant columns keep scale 1.
    pub fn fit_features(x: &Matrix) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.mean_axis(Axis(0)).map_or_else(|| vec![0.0; x.ncols()], |m| m.to_vec());
        let scale = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, m)| {
                let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { x_mean: mean, x_scale: scale, y_shift: 0.0, y_scale: 1.0 }
    }

    /// Set the target shift and scale from the mean and standard deviation of `y`.
    pub fn with_target(mut self, y: &[f64]) -> Self {
        if y.is_empty() {
            return self;
        }
        let n = y.len() as f64;
        let m = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        self.y_shift = m;
        self.y_scale = if sd > 1e-12 { sd } else { 1.0 };
        self
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for (mut col, (m, s)) in out.axis_iter_mut(Axis(1)).zip(self.x_mean.iter().zip(&self.x_scale)) {
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

/// Raw head outputs, one row per node in the requested order.
pub(crate) enum Output {
    One(Var),
    Two(Var, Var),
}

/// A trainable uplift model: configuration, parameters and scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub input_dim: usize,
    pub params: ParamStore,
    pub norm: Normalizer,
}

impl Model {
    /// Fresh Xavier-initialized model.
    pub fn new<R: Rng + ?Sized>(
        config: TrainConfig,
        input_dim: usize,
        norm: Normalizer,
        rng: &mut R,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if input_dim == 0 || norm.x_mean.len() != input_dim {
            return Err(TrainError::Config(format!(
                "input width {input_dim} does not match the normalizer width {}",
                norm.x_mean.len()
            )));
        }
        let mut model = Self { config, input_dim, params: ParamStore::new(), norm };
        if let Some(enc) = model.encoder()? {
            enc.init_params(&mut model.params, rng)?;
        }
        match model.config.estimator {
            Estimator::Ct | Estimator::Pl => {
                for head in model.heads() {
                    head.init_params(&mut model.params, rng)?;
                }
            }
            Estimator::TwoModel | Estimator::Ctm => {
                for mlp in model.mlps() {
                    mlp.init_params(&mut model.params, rng)?;
                }
            }
        }
        Ok(model)
    }

    pub(crate) fn encoder(&self) -> Result<Option<Encoder>, TrainError> {
        if !self.config.estimator.uses_graph() {
            return Ok(None);
        }
        let Some(backbone) = self.config.backbone.backbone() else { return Ok(None) };
        let attention_dim = (self.config.attention_dim > 0).then_some(self.config.attention_dim);
        let cfg = EncoderConfig { backbone, widths: self.config.widths.clone(), attention_dim };
        Ok(Some(Encoder::new(cfg, self.input_dim)?))
    }

    fn embed_dim(&self) -> usize {
        match (self.config.estimator.uses_graph(), self.config.backbone) {
            (true, Arch::None) | (false, _) => self.input_dim,
            (true, _) => *self.config.widths.last().unwrap_or(&self.input_dim),
        }
    }

    fn heads(&self) -> Vec<LinearHead> {
        let d = self.embed_dim();
        match self.config.estimator {
            Estimator::Ct => vec![LinearHead::new("head.ct", d, self.config.head_sigmoid)],
            Estimator::Pl => vec![LinearHead::new("head.pl1", d, true), LinearHead::new("head.pl2", d, true)],
            _ => Vec::new(),
        }
    }

    fn mlps(&self) -> Vec<Mlp> {
        let (d, h) = (self.input_dim, &self.config.baseline_hidden);
        match self.config.estimator {
            Estimator::TwoModel => vec![Mlp::new("baseline.tm.t", d, h), Mlp::new("baseline.tm.c", d, h)],
            Estimator::Ctm => vec![Mlp::new("baseline.ctm", d, h)],
            _ => Vec::new(),
        }
    }

    /// Expected parameter names and shapes.
    pub fn param_shapes(&self) -> Result<Vec<(String, (usize, usize))>, TrainError> {
        let mut out = self.encoder()?.map(|e| e.param_shapes()).unwrap_or_default();
        for h in self.heads() {
            out.extend(h.param_shapes());
        }
        for m in self.mlps() {
            out.extend(m.param_shapes());
        }
        Ok(out)
    }

    /// Record the forward pass. Graph models always run over every node and
    /// return `nodes` as the rows to read; baselines run only on `nodes` and
    /// return `0..nodes.len()`.
    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        x_norm: &Matrix,
        graph: &MessageGraph,
        nodes: &[usize],
    ) -> Result<(Output, Vec<usize>), TrainError> {
        let p = &self.params;
        if self.config.estimator.uses_graph() {
            let x = tape.constant(x_norm.clone());
            let h = match self.encoder()? {
                Some(enc) => enc.forward(tape, x, graph, p)?,
                None => x,
            };
            let heads = self.heads();
            let out = match heads.as_slice() {
                [ct] => Output::One(ct.forward(tape, h, p)?),
                [a, b] => Output::Two(a.forward(tape, h, p)?, b.forward(tape, h, p)?),
                _ => unreachable!("graph estimators have one or two heads"),
            };
            Ok((out, nodes.to_vec()))
        } else {
            let rows = x_norm.select(Axis(0), nodes);
            let x = tape.constant(rows);
            let mlps = self.mlps();
            let out = match mlps.as_slice() {
                [m] => Output::One(m.forward(tape, x, p)?),
                [t, c] => Output::Two(t.forward(tape, x, p)?, c.forward(tape, x, p)?),
                _ => unreachable!("baselines have one or two perceptrons"),
            };
            Ok((out, (0..nodes.len()).collect()))
        }
    }

    /// Map raw outputs of the given rows to uplift estimates.
    pub(crate) fn uplift_from(&self, tape: &Tape, out: &Output, rows: &[usize]) -> Vec<f64> {
        let col = |v: Var| -> Vec<f64> { rows.iter().map(|&r| tape.value(v)[[r, 0]]).collect() };
        let Normalizer { y_shift, y_scale, .. } = self.norm;
        match (self.config.estimator, out) {
            (Estimator::Ct | Estimator::Ctm, Output::One(v)) => {
                col(*v).into_iter().map(|z| z * y_scale + y_shift).collect()
            }
            (Estimator::Pl, Output::Two(a, b)) => pl_uplift(&col(*a), &col(*b)),
            (Estimator::TwoModel, Output::Two(a, b)) => {
                col(*a).into_iter().zip(col(*b)).map(|(t, c)| (t - c) * y_scale).collect()
            }
            _ => unreachable!("output arity follows the estimator"),
        }
    }

    /// Full-graph inference of `τ̂` for every node.
    pub fn predict(&self, dataset: &GraphDataset) -> Result<Vec<f64>, TrainError> {
        self.predict_with(dataset.features(), &MessageGraph::new(dataset.adjacency()))
    }

    pub fn predict_with(&self, features: &Matrix, graph: &MessageGraph) -> Result<Vec<f64>, TrainError> {
        if features.ncols() != self.input_dim {
            return Err(TrainError::Config(format!(
                "dataset has {} feature columns, model expects {}",
                features.ncols(),
                self.input_dim
            )));
        }
        let x = self.norm.apply(features);
        let nodes: Vec<usize> = (0..features.nrows()).collect();
        let mut tape = Tape::new();
        let (out, rows) = self.forward(&mut tape, &x, graph, &nodes)?;
        Ok(self.uplift_from(&tape, &out, &rows))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::default();
        ckpt.metadata.insert("format".into(), "gnum-model".into());
        ckpt.metadata.insert("input_dim".into(), self.input_dim.to_string());
        ckpt.metadata.insert("config".into(), toml::to_string(&self.config).expect("config serializes"));
        ckpt.params = self.params.clone();
        let row = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape");
        ckpt.params.insert("norm.x_mean", row(&self.norm.x_mean));
        ckpt.params.insert("norm.x_scale", row(&self.norm.x_scale));
        ckpt.params.insert("norm.target", row(&[self.norm.y_shift, self.norm.y_scale]));
        ckpt
    }

    /// Rebuild a model. With `expected`, the architecture is taken from that
    /// configuration and every stored tensor must match its shapes.
    pub fn from_checkpoint(ckpt: &Checkpoint, expected: Option<&TrainConfig>) -> Result<Self, TrainError> {
        let meta =
            |k: &str| ckpt.metadata.get(k).ok_or_else(|| TrainError::Checkpoint(format!("missing metadata `{k}`")));
        if meta("format")? != "gnum-model" {
            return Err(TrainError::Checkpoint("not a model checkpoint".into()));
        }
        let input_dim: usize =
            meta("input_dim")?.parse().map_err(|_| TrainError::Checkpoint("bad `input_dim` metadata".into()))?;
        let stored: TrainConfig = toml::from_str(meta("config")?)
            .map_err(|e| TrainError::Checkpoint(format!("bad `config` metadata: {e}")))?;
        let config = expected.cloned().unwrap_or(stored);
        let mut params = ParamStore::new();
        let mut norm = Normalizer::identity(input_dim);
        for (name, m) in ckpt.params.iter() {
            match name {
                "norm.x_mean" => norm.x_mean = m.iter().copied().collect(),
                "norm.x_scale" => norm.x_scale = m.iter().copied().collect(),
                "norm.target" if m.len() == 2 => (norm.y_shift, norm.y_scale) = (m[[0, 0]], m[[0, 1]]),
                "norm.target" => {
                    return Err(TrainError::Checkpoint("tensor `norm.target` must hold two values".into()))
                }
                _ => params.insert(name, m.clone()),
            }
        }
        if norm.x_mean.len() != input_dim || norm.x_scale.len() != input_dim {
            return Err(TrainError::Checkpoint(format!("normalizer tensors do not have width {input_dim}")));
        }
        let model = Self { config, input_dim, params, norm };
        let shapes = model.param_shapes()?;
        for (name, shape) in &shapes {
            match model.params.get(name) {
                None => return Err(TrainError::Checkpoint(format!("tensor `{name}` is missing"))),
                Some(m) if m.dim() != *shape => {
                    return Err(TrainError::Checkpoint(format!(
                        "tensor `{name}` has shape {:?} but the model expects {shape:?}",
                        m.dim()
                    )))
                }
                _ => {}
            }
        }
        if model.params.len() != shapes.len() {
            let extra = model.params.names().find(|n| !shapes.iter().any(|(s, _)| s == n)).unwrap_or("?");
            return Err(TrainError::Checkpoint(format!("unexpected tensor `{extra}`")));
        }
        Ok(model)
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<(), TrainError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, &model.to_checkpoint())?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>, expected: Option<&TrainConfig>) -> Result<Model, TrainError> {
    let ckpt = read_checkpoint(BufReader::new(File::open(path)?)).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    Model::from_checkpoint(&ckpt, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::toy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(estimator: Estimator, backbone: Arch) -> Model {
        let cfg = TrainConfig { estimator, backbone, ..TrainConfig::preset("toy").unwrap() };
        Model::new(cfg, 4, Normalizer::identity(4), &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn parameter_names() {
        let m = model(Estimator::Pl, Arch::Gnum);
        let names: Vec<&str> = m.params.names().collect();
        assert!(names.contains(&"gnum.l0.Ws") && names.contains(&"head.pl1.W") && names.contains(&"head.pl2.b"));
        let tm = model(Estimator::TwoModel, Arch::Gnum);
        assert!(tm.params.names().all(|n| n.starts_with("baseline.tm.")));
        let ctm = model(Estimator::Ctm, Arch::None);
        assert!(ctm.params.names().all(|n| n.starts_with("baseline.ctm.")));
    }

    #[test]
    fn zero_weights_give_bias_uplift() {
        let ds = toy(6, &[(0, 1), (1, 2), (3, 4)]);
        let cfg = TrainConfig { estimator: Estimator::Ct, ..TrainConfig::preset("toy").unwrap() };
        let d = ds.feature_dim();
        let mut ct = Model::new(cfg, d, Normalizer::identity(d), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (name, w) in ct.params.iter_mut() {
            w.fill(if name == "head.ct.b" { 0.7 } else { 0.0 });
        }
        assert!(ct.predict(&ds).unwrap().iter().all(|&v| v == 0.7));
        let mut pl = Model::new(
            TrainConfig { estimator: Estimator::Pl, ..ct.config.clone() },
            d,
            Normalizer::identity(d),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        for (name, w) in pl.params.iter_mut() {
            w.fill(if name.ends_with(".b") && name.starts_with("head") { 0.3 } else { 0.0 });
        }
        let expect = 1.0 - 2.0 * crate::ndiff::sigmoid(0.3);
        assert!(pl.predict(&ds).unwrap().iter().all(|&v| (v - expect).abs() < 1e-15));
    }

    #[test]
    fn checkpoint_round_trip_and_shape_errors() {
        let m = model(Estimator::Ct, Arch::Gcn);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_model(&path, &m).unwrap();
        assert_eq!(load_model(&path, None).unwrap(), m);
        let wider = TrainConfig { widths: vec![8, 5], ..m.config.clone() };
        let err = load_model(&path, Some(&wider)).unwrap_err().to_string();
        assert!(err.contains("gcn.l1.W"), "{err}");
    }

    #[test]
    fn normalizer_standardizes_columns() {
        let x = ndarray::array![[1.0, 5.0], [3.0, 5.0]];
        let n = Normalizer::fit_features(&x);
        assert_eq!(n.apply(&x), ndarray::array![[-1.0, 0.0], [1.0, 0.0]]);
        let n = n.with_target(&[2.0, 4.0]);
        assert_eq!((n.y_shift, n.y_scale), (3.0, 1.0));
    }
}
