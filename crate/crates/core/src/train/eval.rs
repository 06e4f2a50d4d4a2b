use crate::graph::GraphDataset;
use crate::metrics::{
    ate_error, default_ks, neighbor_uplift_mse, pehe, qini_curve, uplift_curve, CurveOptions, EvalReport,
};

use super::{Model, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub ks: Vec<f64>,
    pub n_bins: usize,
    pub curve: CurveOptions,
    /// Seed of the random-set draw in the neighbor analysis; `None` skips it.
    pub neighbor_seed: Option<u64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { ks: default_ks(), n_bins: 100, curve: CurveOptions::default(), neighbor_seed: Some(0) }
    }
}

/// Predict on the full graph and score the nodes in `nodes`. √PEHE and the
/// ATE error appear only when the dataset carries both potential outcomes.
/// The neighbor analysis uses predictions of every node.
pub fn evaluate(
    model: &Model,
    dataset: &GraphDataset,
    nodes: &[usize],
    opts: &EvalOptions,
) -> Result<EvalReport, TrainError> {
    let tau = model.predict(dataset)?;
    let mut report = evaluate_predictions(&tau, dataset, nodes, opts)?;
    report.metadata.insert("estimator".into(), model.config.estimator.to_string());
    report.metadata.insert("backbone".into(), model.config.backbone.to_string());
    report.metadata.insert("seed".into(), model.config.seed.to_string());
    Ok(report)
}

pub(crate) fn evaluate_predictions(
    tau: &[f64],
    dataset: &GraphDataset,
    nodes: &[usize],
    opts: &EvalOptions,
) -> Result<EvalReport, TrainError> {
    let pick = |v: &[f64]| nodes.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let sub_tau = pick(tau);
    let t: Vec<u8> = nodes.iter().map(|&i| dataset.treatment()[i]).collect();
    let y = pick(dataset.outcome_obs());
    let mut report = EvalReport::default();
    if let Some(truth) = dataset.true_uplift() {
        let truth = pick(&truth);
        report.pehe = Some(pehe(&sub_tau, &truth)?);
        report.ate_error = Some(ate_error(&sub_tau, &truth)?);
    }
    report.curve = uplift_curve(&sub_tau, &t, &y, &opts.ks, opts.curve)?;
    let q = qini_curve(&sub_tau, &t, &y, opts.n_bins)?;
    report.qini = q.coefficient;
    report.qini_gain = q.points;
    if let Some(seed) = opts.neighbor_seed {
        report.neighbor = Some(neighbor_uplift_mse(tau, dataset.adjacency(), seed)?);
    }
    report.metadata.insert("nodes".into(), nodes.len().to_string());
    Ok(report)
}
