use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::estimators::{ct_loss, partial_label, pl_loss, transformed_target, Estimator, EstimatorError, PartialLabel};
use crate::gnn::{GnnError, MessageGraph};
use crate::graph::{GraphDataset, Propensity, SplitMasks};
use crate::metrics::{pehe, qini};
use crate::ndiff::{Matrix, NdiffError, Optimizer, OptimizerKind, ParamStore, Tape, Var};

use super::model::Output;
use super::{Model, Normalizer, TrainConfig, TrainError};

/// One row per epoch actually run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Validation √PEHE when ground truth exists, else validation Qini.
    pub val_metric: Vec<Option<f64>>,
    pub seconds: Vec<f64>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// `epoch,train_loss,val_loss,val_metric,seconds`. With `wall_clock`
    /// false the seconds column is written as 0.
    pub fn to_csv(&self, wall_clock: bool) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_metric,seconds\n");
        for e in 0..self.epochs() {
            let metric = self.val_metric[e].map_or(String::new(), |m| format!("{m:.10e}"));
            let secs = if wall_clock { self.seconds[e] } else { 0.0 };
            let _ = writeln!(s, "{},{:.10e},{:.10e},{metric},{secs:.3}", e + 1, self.train_loss[e], self.val_loss[e]);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest monitored loss.
    pub model: Model,
    pub history: TrainHistory,
    pub best_epoch: usize,
    /// Propensity used by the transformed target, if any.
    pub propensity: Option<Propensity>,
}

/// Per-node supervision prepared once before the epoch loop.
#[derive(Clone)]
enum Targets {
    /// Standardized regression target per node (CT, CTM, Two-Model).
    Real(Vec<f64>),
    Partial(Vec<PartialLabel>),
}

struct Problem<'a> {
    model: Model,
    x: Matrix,
    graph: MessageGraph,
    t: &'a [u8],
    targets: Targets,
}

impl Problem<'_> {
    /// Summed loss over `nodes` and the rows/outputs needed for predictions.
    fn loss(&self, tape: &mut Tape, nodes: &[usize]) -> Result<(Option<Var>, Output, Vec<usize>), TrainError> {
        let (out, rows) = self.model.forward(tape, &self.x, &self.graph, nodes)?;
        let graph_rows = self.model.config.estimator.uses_graph();
        let loss = match (&self.targets, &out) {
            (Targets::Real(z), Output::One(v)) => {
                let per_row: Vec<f64> = if graph_rows { z.clone() } else { nodes.iter().map(|&i| z[i]).collect() };
                Some(ct_loss(tape, *v, &per_row, &rows)?)
            }
            (Targets::Real(y), Output::Two(a, b)) => {
                let per_row: Vec<f64> = if graph_rows { y.clone() } else { nodes.iter().map(|&i| y[i]).collect() };
                let pick = |arm: u8| -> Vec<usize> {
                    rows.iter().zip(nodes).filter(|(_, &i)| self.t[i] == arm).map(|(&r, _)| r).collect()
                };
                let mut terms = Vec::new();
                for (v, arm) in [(*a, 1), (*b, 0)] {
                    let idx = pick(arm);
                    if !idx.is_empty() {
                        terms.push(ct_loss(tape, v, &per_row, &idx)?);
                    }
                }
                match terms.as_slice() {
                    [a, b] => Some(tape.add(*a, *b)?),
                    [a] => Some(*a),
                    _ => None,
                }
            }
            (Targets::Partial(labels), Output::Two(a, b)) => {
                let per_row: Vec<PartialLabel> =
                    if graph_rows { labels.clone() } else { nodes.iter().map(|&i| labels[i]).collect() };
                Some(pl_loss(tape, *a, *b, &per_row, &rows)?)
            }
            _ => unreachable!("targets follow the estimator"),
        };
        Ok((loss, out, rows))
    }
}

fn divergence(epoch: usize, reason: String, last: Option<&Model>) -> TrainError {
    TrainError::Divergence { epoch, reason, last_finite: Box::new(last.cloned()) }
}

fn is_numerical(e: &TrainError) -> bool {
    let nd = |e: &NdiffError| matches!(e, NdiffError::NonFinite { .. } | NdiffError::NonFiniteGradient(_));
    match e {
        TrainError::Ndiff(e) => nd(e),
        TrainError::Gnn(GnnError::Ndiff(e)) => nd(e),
        TrainError::Estimator(EstimatorError::Ndiff(e)) => nd(e),
        _ => false,
    }
}

/// Propensity for the transformed target: the stored column if present,
/// else the treated share among labeled training nodes.
pub(crate) fn resolve_propensity(dataset: &GraphDataset, labeled: &[usize]) -> Result<Propensity, TrainError> {
    if let Some(p) = dataset.stored_propensity() {
        return Ok(p.clone());
    }
    let treated = labeled.iter().filter(|&&i| dataset.treatment()[i] == 1).count();
    let p = treated as f64 / labeled.len() as f64;
    if treated == 0 || treated == labeled.len() {
        return Err(TrainError::Config(format!(
            "labeled training nodes contain {treated} treated of {}; both arms are required",
            labeled.len()
        )));
    }
    Ok(Propensity::Constant(p))
}

/// Validate inputs, standardize, build per-node targets and initialize the
/// model from stream 0 of `config.seed`.
fn prepare<'a>(
    dataset: &'a GraphDataset,
    masks: &SplitMasks,
    config: &TrainConfig,
) -> Result<(Problem<'a>, Option<Propensity>), TrainError> {
    config.validate()?;
    if masks.n_nodes() != dataset.n_nodes() {
        return Err(TrainError::Config(format!(
            "masks cover {} nodes, dataset has {}",
            masks.n_nodes(),
            dataset.n_nodes()
        )));
    }
    let labeled = masks.labeled_indices();
    if labeled.is_empty() {
        return Err(TrainError::Config("no labeled training node".into()));
    }
    let t = dataset.treatment();
    let y = dataset.outcome_obs();
    if config.estimator.requires_binary() {
        if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(EstimatorError::NonBinary { index: i, value: y[i] }.into());
        }
    }
    let mut norm = if config.standardize {
        Normalizer::fit_features(dataset.features())
    } else {
        Normalizer::identity(dataset.feature_dim())
    };
    let labeled_values = |v: &[f64]| labeled.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let mut propensity = None;
    let targets = match config.estimator {
        Estimator::Ct | Estimator::Ctm => {
            let p = resolve_propensity(dataset, &labeled)?;
            let z = transformed_target(t, y, &p)?;
            propensity = Some(p);
            if config.standardize && !(config.estimator == Estimator::Ct && config.head_sigmoid) {
                norm = norm.with_target(&labeled_values(&z));
            }
            Targets::Real(z.iter().map(|v| (v - norm.y_shift) / norm.y_scale).collect())
        }
        Estimator::TwoModel => {
            let arms: Vec<u8> = labeled.iter().map(|&i| t[i]).collect();
            if !arms.contains(&0) || !arms.contains(&1) {
                return Err(TrainError::Config("two-model baseline needs labeled nodes in both arms".into()));
            }
            if config.standardize {
                norm = norm.with_target(&labeled_values(y));
            }
            Targets::Real(y.iter().map(|v| (v - norm.y_shift) / norm.y_scale).collect())
        }
        Estimator::Pl => {
            Targets::Partial(t.iter().zip(y).map(|(&ti, &yi)| partial_label(ti, yi)).collect::<Result<_, _>>()?)
        }
    };
    let x = norm.apply(dataset.features());
    let model = Model::new(config.clone(), dataset.feature_dim(), norm, &mut stream(config.seed, 0))?;
    let problem = Problem { model, x, graph: MessageGraph::new(dataset.adjacency()), t, targets };
    Ok((problem, propensity))
}

/// The objective [`train`] minimizes, as a function of the parameters: the
/// summed loss over a set of nodes with the same targets, standardization
/// and initial parameters as a training run with the same inputs.
pub struct Objective<'a> {
    problem: Problem<'a>,
}

impl<'a> Objective<'a> {
    pub fn new(dataset: &'a GraphDataset, masks: &SplitMasks, config: &TrainConfig) -> Result<Self, TrainError> {
        Ok(Self { problem: prepare(dataset, masks, config)?.0 })
    }

    /// Initial parameters.
    pub fn params(&self) -> &ParamStore {
        &self.problem.model.params
    }

    /// Summed loss over `nodes` with parameters taken from `params`.
    pub fn loss(&self, tape: &mut Tape, params: &ParamStore, nodes: &[usize]) -> Result<Var, TrainError> {
        let problem = Problem {
            model: Model { params: params.clone(), ..self.problem.model.clone() },
            x: self.problem.x.clone(),
            graph: self.problem.graph.clone(),
            t: self.problem.t,
            targets: self.problem.targets.clone(),
        };
        problem.loss(tape, nodes)?.0.ok_or_else(|| TrainError::Config("no node contributes to the loss".into()))
    }
}

/// Fit `config` on the labeled training nodes of `masks`, selecting the
/// epoch with the lowest validation loss (training loss when there is no
/// validation node).
pub fn train(dataset: &GraphDataset, masks: &SplitMasks, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let (mut problem, propensity) = prepare(dataset, masks, config)?;
    let labeled = masks.labeled_indices();
    let val = masks.val_indices();
    let (t, y) = (dataset.treatment(), dataset.outcome_obs());
    let truth = dataset.true_uplift();
    let mut opt = Optimizer::new(OptimizerKind::adam(), config.learning_rate, config.weight_decay)?;
    let mut order = labeled.clone();
    let mut shuffle_rng = stream(config.seed, 1);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Model, usize)> = None;
    let mut since_best = 0;
    let start = Instant::now();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let step = || -> Result<Option<(f64, crate::ndiff::Gradients)>, TrainError> {
                let mut tape = Tape::new();
                let (loss, _, _) = problem.loss(&mut tape, batch)?;
                let Some(loss) = loss else { return Ok(None) };
                let value = tape.scalar(loss);
                Ok(Some((value, tape.backward(loss)?)))
            };
            let stepped = match step() {
                Err(e) if is_numerical(&e) => {
                    return Err(divergence(epoch, e.to_string(), best.as_ref().map(|b| &b.1)));
                }
                other => other?,
            };
            let Some((value, grads)) = stepped else { continue };
            if !value.is_finite() {
                return Err(divergence(epoch, format!("loss {value}"), best.as_ref().map(|b| &b.1)));
            }
            epoch_loss += value;
            if let Err(e) = opt.step(&mut problem.model.params, &grads) {
                return Err(divergence(epoch, e.to_string(), best.as_ref().map(|b| &b.1)));
            }
        }
        let train_loss = epoch_loss / labeled.len() as f64;

        let (val_loss, val_metric) = if val.is_empty() {
            (train_loss, None)
        } else {
            let mut tape = Tape::new();
            let (loss, out, rows) = match problem.loss(&mut tape, &val) {
                Err(e) if is_numerical(&e) => {
                    return Err(divergence(epoch, e.to_string(), best.as_ref().map(|b| &b.1)))
                }
                other => other?,
            };
            let vl = loss.map_or(f64::NAN, |l| tape.scalar(l)) / val.len() as f64;
            let tau = problem.model.uplift_from(&tape, &out, &rows);
            let metric = match &truth {
                Some(truth) => pehe(&tau, &val.iter().map(|&i| truth[i]).collect::<Vec<_>>()).ok(),
                None => {
                    let vt: Vec<u8> = val.iter().map(|&i| t[i]).collect();
                    let vy: Vec<f64> = val.iter().map(|&i| y[i]).collect();
                    qini(&tau, &vt, &vy, 100).ok()
                }
            };
            (vl, metric)
        };
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.val_metric.push(val_metric);
        history.seconds.push(start.elapsed().as_secs_f64());
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} metric {val_metric:?}");

        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, problem.model.clone(), epoch));
            since_best = 0;
        } else if val_loss.is_finite() {
            since_best += 1;
            if config.patience > 0 && since_best >= config.patience {
                break;
            }
        } else {
            return Err(divergence(epoch, format!("validation loss {val_loss}"), best.as_ref().map(|b| &b.1)));
        }
    }
    let (_, model, best_epoch) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, history, best_epoch, propensity })
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_splits, SplitFractions};
    use crate::synth::{generate, SynthConfig};

    fn small(binary: bool) -> GraphDataset {
        let cfg = SynthConfig {
            n_nodes: 60,
            pa_m: 2,
            feature_dim: 12,
            n_topics: 4,
            binary,
            monotone: binary,
            ..Default::default()
        };
        generate(&cfg).unwrap().dataset
    }

    fn toy_config(estimator: Estimator) -> TrainConfig {
        TrainConfig { estimator, ..TrainConfig::preset("toy").unwrap() }
    }

    #[test]
    fn deterministic_history() {
        let ds = small(false);
        let masks = make_splits(ds.n_nodes(), SplitFractions::default(), 1).unwrap();
        let a = train(&ds, &masks, &toy_config(Estimator::Ct)).unwrap();
        let b = train(&ds, &masks, &toy_config(Estimator::Ct)).unwrap();
        assert_eq!(a.history.train_loss, b.history.train_loss);
        assert_eq!(a.history.val_loss, b.history.val_loss);
        assert_eq!(a.model, b.model);
        assert_eq!(a.history.to_csv(false), b.history.to_csv(false));
    }

    #[test]
    fn pl_rejects_continuous_outcomes() {
        let ds = small(false);
        let masks = make_splits(ds.n_nodes(), SplitFractions::default(), 1).unwrap();
        let err = train(&ds, &masks, &toy_config(Estimator::Pl)).unwrap_err();
        assert!(err.to_string().contains("binarize"), "{err}");
    }

    #[test]
    fn every_estimator_runs() {
        let ds = small(true);
        let masks = make_splits(ds.n_nodes(), SplitFractions::default(), 2).unwrap();
        for est in [Estimator::Ct, Estimator::Pl, Estimator::TwoModel, Estimator::Ctm] {
            let out = train(&ds, &masks, &toy_config(est)).unwrap();
            let tau = out.model.predict(&ds).unwrap();
            assert_eq!(tau.len(), ds.n_nodes());
            assert!(tau.iter().all(|v| v.is_finite()));
            assert_eq!(out.history.epochs(), out.history.val_loss.len());
            if est == Estimator::Pl {
                assert!(tau.iter().all(|v| v.abs() < 1.0));
            }
        }
    }

    #[test]
    fn weight_decay_shrinks_parameters() {
        let ds = small(false);
        let masks = make_splits(ds.n_nodes(), SplitFractions::default(), 3).unwrap();
        let norm = |wd: f64| {
            let cfg = TrainConfig { weight_decay: wd, epochs: 40, ..toy_config(Estimator::Ct) };
            train(&ds, &masks, &cfg).unwrap().model.params.l2_norm()
        };
        assert!(norm(0.1) < norm(0.0));
    }

    #[test]
    fn csv_layout() {
        let h =
            TrainHistory { train_loss: vec![1.0], val_loss: vec![2.0], val_metric: vec![None], seconds: vec![1.25] };
        let csv = h.to_csv(false);
        assert_eq!(csv.lines().next().unwrap(), "epoch,train_loss,val_loss,val_metric,seconds");
        assert!(csv.lines().nth(1).unwrap().ends_with(",,0.000"));
    }
}
