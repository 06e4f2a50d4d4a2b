use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use crate::ndiff::{xavier_uniform, NdiffError, ParamStore, Tape, Var};

use super::{classifier_membership, EstimatorError, PartialLabel, Role};

/// Affine map to one output column, optionally squashed by a sigmoid.
/// Parameters: `{prefix}.W` (`in × 1`) and `{prefix}.b` (`1 × 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub prefix: String,
    pub in_dim: usize,
    pub sigmoid: bool,
}

impl LinearHead {
    pub fn new(prefix: impl Into<String>, in_dim: usize, sigmoid: bool) -> Self {
        Self { prefix: prefix.into(), in_dim, sigmoid }
    }

    pub fn param_shapes(&self) -> Vec<(String, (usize, usize))> {
        vec![(format!("{}.W", self.prefix), (self.in_dim, 1)), (format!("{}.b", self.prefix), (1, 1))]
    }

    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) -> Result<(), NdiffError> {
        store.insert(format!("{}.W", self.prefix), xavier_uniform(self.in_dim, 1, rng)?);
        store.insert(format!("{}.b", self.prefix), Array2::zeros((1, 1)));
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, h: Var, store: &ParamStore) -> Result<Var, NdiffError> {
        let w = tape.param(store, &format!("{}.W", self.prefix))?;
        let b = tape.param(store, &format!("{}.b", self.prefix))?;
        let hw = tape.matmul(h, w)?;
        let out = tape.add_row(hw, b)?;
        if self.sigmoid {
            tape.sigmoid(out)
        } else {
            Ok(out)
        }
    }
}

/// Fully connected stack with tanh hidden units and a linear scalar output.
/// Parameters: `{prefix}.l{k}.W` and `{prefix}.l{k}.b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub prefix: String,
    /// Layer widths including input and the final output of 1.
    pub dims: Vec<usize>,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, in_dim: usize, hidden: &[usize]) -> Self {
        let mut dims = vec![in_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Self { prefix: prefix.into(), dims }
    }

    pub fn param_shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        for (k, w) in self.dims.windows(2).enumerate() {
            out.push((format!("{}.l{k}.W", self.prefix), (w[0], w[1])));
            out.push((format!("{}.l{k}.b", self.prefix), (1, w[1])));
        }
        out
    }

    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) -> Result<(), NdiffError> {
        for (k, w) in self.dims.windows(2).enumerate() {
            store.insert(format!("{}.l{k}.W", self.prefix), xavier_uniform(w[0], w[1], rng)?);
            store.insert(format!("{}.l{k}.b", self.prefix), Array2::zeros((1, w[1])));
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, store: &ParamStore) -> Result<Var, NdiffError> {
        let n_layers = self.dims.len() - 1;
        let mut h = x;
        for k in 0..n_layers {
            let w = tape.param(store, &format!("{}.l{k}.W", self.prefix))?;
            let b = tape.param(store, &format!("{}.l{k}.b", self.prefix))?;
            let hw = tape.matmul(h, w)?;
            h = tape.add_row(hw, b)?;
            if k + 1 < n_layers {
                h = tape.tanh(h)?;
            }
        }
        Ok(h)
    }
}

/// `Σ_{i ∈ idx} (z_i - ẑ_i)²`, where `zhat` holds one row per node and `z`
/// one entry per node.
pub fn ct_loss(tape: &mut Tape, zhat: Var, z: &[f64], idx: &[usize]) -> Result<Var, EstimatorError> {
    if idx.is_empty() {
        return Err(EstimatorError::EmptyMask("class-transformed loss over an empty node set".into()));
    }
    let (rows, _) = tape.shape(zhat);
    if z.len() != rows {
        return Err(EstimatorError::Length(format!("{} targets for {rows} predictions", z.len())));
    }
    let picked = tape.gather_rows(zhat, idx.to_vec())?;
    let target = tape.constant(Array2::from_shape_fn((idx.len(), 1), |(r, _)| z[idx[r]]));
    let diff = tape.sub(picked, target)?;
    let sq = tape.square(diff)?;
    Ok(tape.sum(sq)?)
}

/// Masked cross-entropy of both partial-label classifiers over `idx`.
/// A (node, classifier) pair with the excluded role contributes nothing.
pub fn pl_loss(
    tape: &mut Tape,
    y1: Var,
    y2: Var,
    labels: &[PartialLabel],
    idx: &[usize],
) -> Result<Var, EstimatorError> {
    if idx.is_empty() {
        return Err(EstimatorError::EmptyMask("partial-label loss over an empty node set".into()));
    }
    let (rows, _) = tape.shape(y1);
    if labels.len() != rows {
        return Err(EstimatorError::Length(format!("{} labels for {rows} predictions", labels.len())));
    }
    let index: Arc<[usize]> = idx.into();
    let mut terms = Vec::with_capacity(2);
    for (which, pred) in [(0usize, y1), (1, y2)] {
        let (target, weight): (Vec<f64>, Vec<f64>) = idx
            .iter()
            .map(|&i| {
                let roles = classifier_membership(labels[i]);
                let role = if which == 0 { roles.0 } else { roles.1 };
                role.target_weight()
            })
            .unzip();
        if weight.iter().all(|&w| w == 0.0) {
            log::warn!("partial-label classifier {} has no participating samples in this batch", which + 1);
            continue;
        }
        let picked = tape.gather_rows(pred, index.clone())?;
        terms.push(tape.binary_cross_entropy(picked, target, weight)?);
    }
    match terms.as_slice() {
        [a, b] => Ok(tape.add(*a, *b)?),
        [a] => Ok(*a),
        _ => {
            let picked = tape.gather_rows(y1, index)?;
            let s = tape.sum(picked)?;
            Ok(tape.scale(s, 0.0)?)
        }
    }
}

/// Count `(node, classifier)` pairs with a non-excluded role.
pub fn participating_pairs(labels: &[PartialLabel], idx: &[usize]) -> usize {
    idx.iter()
        .map(|&i| {
            let (a, b) = classifier_membership(labels[i]);
            usize::from(a != Role::Excluded) + usize::from(b != Role::Excluded)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::partial_label;
    use crate::ndiff::grad_check;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ct_loss_cases() {
        let mut tape = Tape::new();
        let zhat = tape.variable(array![[2.0], [-2.0], [5.0]]);
        let l = ct_loss(&mut tape, zhat, &[2.0, -2.0, 0.0], &[0, 1]).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        let l = ct_loss(&mut tape, zhat, &[2.0, -2.0, 3.0], &[2]).unwrap();
        assert_eq!(tape.scalar(l), 4.0);
        assert!(ct_loss(&mut tape, zhat, &[0.0; 3], &[]).is_err());
    }

    fn labels() -> Vec<PartialLabel> {
        [(0, 1.0), (0, 0.0), (1, 1.0), (1, 0.0), (1, 1.0)].iter().map(|&(t, y)| partial_label(t, y).unwrap()).collect()
    }

    #[test]
    fn pl_loss_at_half_is_pairs_ln2() {
        let labels = labels();
        let idx: Vec<usize> = (0..5).collect();
        let mut tape = Tape::new();
        let y1 = tape.variable(Array2::from_elem((5, 1), 0.5));
        let y2 = tape.variable(Array2::from_elem((5, 1), 0.5));
        let l = pl_loss(&mut tape, y1, y2, &labels, &idx).unwrap();
        let k = participating_pairs(&labels, &idx);
        assert_eq!(k, 7);
        assert!((tape.scalar(l) - k as f64 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn pl_loss_perfect_predictions() {
        let labels = labels();
        let idx: Vec<usize> = (0..5).collect();
        let (mut p1, mut p2) = (Array2::zeros((5, 1)), Array2::zeros((5, 1)));
        for (i, s) in labels.iter().enumerate() {
            let (a, b) = classifier_membership(*s);
            p1[[i, 0]] = if a == Role::Pos { 1.0 } else { 0.0 };
            p2[[i, 0]] = if b == Role::Pos { 1.0 } else { 0.0 };
        }
        let mut tape = Tape::new();
        let y1 = tape.variable(p1);
        let y2 = tape.variable(p2);
        let l = pl_loss(&mut tape, y1, y2, &labels, &idx).unwrap();
        assert!(tape.scalar(l) < 1e-10);
    }

    #[test]
    fn pl_loss_single_classifier_batch() {
        // only [0,1,1] nodes: classifier 2 has no participants
        let labels = vec![partial_label(0, 0.0).unwrap(); 3];
        let mut tape = Tape::new();
        let y1 = tape.variable(Array2::from_elem((3, 1), 0.5));
        let y2 = tape.variable(Array2::from_elem((3, 1), 0.5));
        let l = pl_loss(&mut tape, y1, y2, &labels, &[0, 1, 2]).unwrap();
        assert!((tape.scalar(l) - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn head_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
        let ct = LinearHead::new("head.ct", 4, false);
        let pl1 = LinearHead::new("head.pl1", 4, true);
        let pl2 = LinearHead::new("head.pl2", 4, true);
        let mut store = ParamStore::new();
        for head in [&ct, &pl1, &pl2] {
            head.init_params(&mut store, &mut rng).unwrap();
        }
        store.get_mut("head.ct.b").unwrap()[[0, 0]] = 0.3;
        let z = [2.0, -2.0, 1.5, 0.0, -1.0, 4.0];
        let err = grad_check(
            |t, p| {
                let hv = t.constant(h.clone());
                let zh = ct.forward(t, hv, p)?;
                ct_loss(t, zh, &z, &[0, 2, 3, 5]).map_err(|e| NdiffError::InvalidArgument(e.to_string()))
            },
            &store,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "ct head {err}");
        let mut labels = labels();
        labels.push(partial_label(0, 1.0).unwrap());
        let err = grad_check(
            |t, p| {
                let hv = t.constant(h.clone());
                let a = pl1.forward(t, hv, p)?;
                let b = pl2.forward(t, hv, p)?;
                pl_loss(t, a, b, &labels, &[0, 1, 2, 3, 4, 5]).map_err(|e| NdiffError::InvalidArgument(e.to_string()))
            },
            &store,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "pl head {err}");
    }

    #[test]
    fn mlp_shapes_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mlp = Mlp::new("baseline.ctm", 3, &[5, 4]);
        assert_eq!(mlp.param_shapes().len(), 6);
        let mut store = ParamStore::new();
        mlp.init_params(&mut store, &mut rng).unwrap();
        let x = Array2::from_shape_fn((7, 3), |_| rng.random_range(-1.0..1.0));
        let z: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        let err = grad_check(
            |t, p| {
                let xv = t.constant(x.clone());
                let out = mlp.forward(t, xv, p)?;
                ct_loss(t, out, &z, &[0, 1, 2, 3, 4, 5, 6]).map_err(|e| NdiffError::InvalidArgument(e.to_string()))
            },
            &store,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
