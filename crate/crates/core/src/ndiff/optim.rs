use indexmap::IndexMap;
use ndarray::{Array2, Zip};

use super::{Gradients, Matrix, NdiffError, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    /// Adaptive moment estimation.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First-order optimizer with L2 weight decay.
///
/// The decay enters as an additive gradient term `λ·w`, i.e. the gradient of
/// `λ/2 · ‖w‖²`, applied to every parameter including biases.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    steps: u64,
    moments: IndexMap<String, (Matrix, Matrix)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Result<Self, NdiffError> {
        if !(lr > 0.0) || !(weight_decay >= 0.0) {
            return Err(NdiffError::InvalidArgument(format!(
                "optimizer needs lr > 0 and weight decay >= 0, got lr={lr}, decay={weight_decay}"
            )));
        }
        Ok(Self { kind, lr, weight_decay, steps: 0, moments: IndexMap::new() })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Update every parameter in `params`. Parameters without a gradient
    /// (unused in this step) still receive weight decay.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<(), NdiffError> {
        for (name, g) in grads.named() {
            if let Some(g) = g {
                if !g.iter().all(|x| x.is_finite()) {
                    return Err(NdiffError::NonFiniteGradient(name.to_string()));
                }
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        for (name, w) in params.iter_mut() {
            let mut g = match grads.param(name) {
                Some(g) if g.dim() == w.dim() => g.clone(),
                Some(g) => {
                    return Err(NdiffError::Shape { op: "optimizer.step", lhs: w.dim(), rhs: g.dim() });
                }
                None => Array2::zeros(w.dim()),
            };
            if self.weight_decay > 0.0 {
                g.scaled_add(self.weight_decay, w);
            }
            match self.kind {
                OptimizerKind::Sgd => w.scaled_add(-self.lr, &g),
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let (m, v) = self
                        .moments
                        .entry(name.to_string())
                        .or_insert_with(|| (Array2::zeros(w.dim()), Array2::zeros(w.dim())));
                    let bc1 = 1.0 - beta1.powi(t);
                    let bc2 = 1.0 - beta2.powi(t);
                    let lr = self.lr;
                    Zip::from(&mut *w).and(&mut *m).and(&mut *v).and(&g).for_each(|w, m, v, &g| {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndiff::Tape;
    use ndarray::array;

    fn quadratic_step(store: &ParamStore, target: f64) -> Gradients {
        let mut tape = Tape::new();
        let w = tape.param(store, "w").unwrap();
        let c = tape.constant(array![[target]]);
        let d = tape.sub(w, c).unwrap();
        let sq = tape.square(d).unwrap();
        let loss = tape.sum(sq).unwrap();
        tape.backward(loss).unwrap()
    }

    #[test]
    fn plain_step_arithmetic() {
        // w = 1, g = 0.5 (from (w - 0.75)^2), lr = 0.1 -> 0.95
        let mut store = ParamStore::new();
        store.insert("w", array![[1.0]]);
        let grads = quadratic_step(&store, 0.75);
        assert_eq!(grads.param("w").unwrap()[[0, 0]], 0.5);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 0.0).unwrap();
        opt.step(&mut store, &grads).unwrap();
        assert!((store.get("w").unwrap()[[0, 0]] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn decay_only_step_shrinks() {
        let mut store = ParamStore::new();
        store.insert("w", array![[2.0, -3.0]]);
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let z = tape.scale(w, 0.0).unwrap();
        let loss = tape.sum(z).unwrap();
        let grads = tape.backward(loss).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 0.5).unwrap();
        opt.step(&mut store, &grads).unwrap();
        let w = store.get("w").unwrap();
        assert!((w[[0, 0]] - 1.9).abs() < 1e-15);
        assert!((w[[0, 1]] + 2.85).abs() < 1e-15);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let mut store = ParamStore::new();
        store.insert("w", array![[5.0]]);
        let mut opt = Optimizer::new(OptimizerKind::adam(), 0.05, 0.0).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..5000 {
            let grads = quadratic_step(&store, -1.25);
            last = grads.param("w").unwrap()[[0, 0]].abs();
            if last < 1e-6 {
                break;
            }
            opt.step(&mut store, &grads).unwrap();
        }
        assert!(last < 1e-6, "gradient still {last}");
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut store = ParamStore::new();
        store.insert("w", array![[1.0]]);
        let mut tape = Tape::new().without_nan_trap();
        let w = tape.param(&store, "w").unwrap();
        let big = tape.scale(w, f64::INFINITY).unwrap();
        let loss = tape.sum(big).unwrap();
        let grads = tape.backward(loss).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 0.0).unwrap();
        assert_eq!(opt.step(&mut store, &grads).unwrap_err(), NdiffError::NonFiniteGradient("w".into()));
    }

    #[test]
    fn rejects_negative_decay() {
        assert!(Optimizer::new(OptimizerKind::Sgd, 0.1, -1.0).is_err());
    }
}
