use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::GraphError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.7, val: 0.1, test: 0.2 }
    }
}

/// Disjoint train/validation/test node masks plus the labeled subset of train.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
    /// Training nodes whose outcome may be used in the loss.
    pub labeled: Vec<bool>,
    /// Stored in per-mille so the struct stays `Eq`.
    label_permille: u32,
}

fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect()
}

impl SplitMasks {
    pub fn n_nodes(&self) -> usize {
        self.train.len()
    }

    pub fn label_fraction(&self) -> f64 {
        self.label_permille as f64 / 1000.0
    }

    pub fn train_indices(&self) -> Vec<usize> {
        indices(&self.train)
    }

    pub fn val_indices(&self) -> Vec<usize> {
        indices(&self.val)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        indices(&self.test)
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        indices(&self.labeled)
    }

    /// Indices for a split named `train`, `val`, `test` or `labeled`.
    pub fn by_name(&self, name: &str) -> Result<Vec<usize>, GraphError> {
        match name {
            "train" => Ok(self.train_indices()),
            "val" => Ok(self.val_indices()),
            "test" => Ok(self.test_indices()),
            "labeled" => Ok(self.labeled_indices()),
            "all" => Ok((0..self.n_nodes()).collect()),
            other => Err(GraphError::Config(format!("unknown split `{other}`"))),
        }
    }

    /// Keep outcomes for a uniform sample of `round(fraction·|train|)` training
    /// nodes. Validation and test masks and all edges are untouched.
    pub fn mask_labels(&self, fraction: f64, seed: u64) -> Result<SplitMasks, GraphError> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(GraphError::Config(format!("label fraction must be in (0, 1], got {fraction}")));
        }
        let mut train = self.train_indices();
        let k = (fraction * train.len() as f64).round() as usize;
        if k == 0 {
            return Err(GraphError::Config(format!(
                "label fraction {fraction} of {} training nodes leaves no labeled node",
                train.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        train.shuffle(&mut rng);
        let mut labeled = vec![false; self.n_nodes()];
        for &i in &train[..k] {
            labeled[i] = true;
        }
        Ok(SplitMasks { labeled, label_permille: (fraction * 1000.0).round() as u32, ..self.clone() })
    }

    /// Rebuild from explicit index lists (all training nodes labeled).
    pub fn from_indices(n: usize, train: &[usize], val: &[usize], test: &[usize]) -> Result<Self, GraphError> {
        let mut owner = vec![0u8; n];
        let mut masks = [vec![false; n], vec![false; n], vec![false; n]];
        for (k, list) in [train, val, test].into_iter().enumerate() {
            for &i in list {
                if i >= n {
                    return Err(GraphError::NodeOutOfRange { index: i, n });
                }
                if owner[i] != 0 {
                    return Err(GraphError::Config(format!("node {i} is in more than one split")));
                }
                owner[i] = k as u8 + 1;
                masks[k][i] = true;
            }
        }
        if let Some(i) = owner.iter().position(|&o| o == 0) {
            return Err(GraphError::Config(format!("node {i} is not assigned to any split")));
        }
        let [train, val, test] = masks;
        Ok(SplitMasks { labeled: train.clone(), train, val, test, label_permille: 1000 })
    }
}

/// Random train/validation/test partition of `n` nodes. Train and validation
/// sizes are `round(fraction·n)`; test takes the remainder.
pub fn make_splits(n: usize, fractions: SplitFractions, seed: u64) -> Result<SplitMasks, GraphError> {
    let SplitFractions { train, val, test } = fractions;
    if !(train > 0.0) || !(val >= 0.0) || !(test >= 0.0) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(GraphError::Config(format!(
            "split fractions must be non-negative with train > 0 and sum to 1, got ({train}, {val}, {test})"
        )));
    }
    let n_train = ((train * n as f64).round() as usize).min(n);
    let n_val = ((val * n as f64).round() as usize).min(n - n_train);
    if n_train == 0 {
        return Err(GraphError::Config(format!("train fraction {train} of {n} nodes is empty")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let (tr, rest) = perm.split_at(n_train);
    let (va, te) = rest.split_at(n_val);
    SplitMasks::from_indices(n, tr, va, te)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(m: &[bool]) -> usize {
        m.iter().filter(|&&b| b).count()
    }

    #[test]
    fn exact_rounding_small() {
        let s = make_splits(10, SplitFractions::default(), 1).unwrap();
        assert_eq!((count(&s.train), count(&s.val), count(&s.test)), (7, 1, 2));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let f = SplitFractions::default();
        assert_eq!(make_splits(100, f, 1).unwrap(), make_splits(100, f, 1).unwrap());
        let a = make_splits(100, f, 1).unwrap();
        let b = make_splits(100, f, 2).unwrap();
        assert_ne!(a.train, b.train);
        assert_eq!(count(&a.train), count(&b.train));
        assert_eq!(count(&a.test), count(&b.test));
    }

    #[test]
    fn zero_train_rejected() {
        let f = SplitFractions { train: 0.0, val: 0.5, test: 0.5 };
        assert!(matches!(make_splits(10, f, 0), Err(GraphError::Config(_))));
    }

    #[test]
    fn label_scarcity() {
        let s = make_splits(1000, SplitFractions::default(), 3).unwrap();
        assert_eq!(count(&s.train), 700);
        let m = s.mask_labels(0.1, 9).unwrap();
        assert_eq!(count(&m.labeled), 70);
        assert!(m.labeled.iter().zip(&m.train).all(|(&l, &t)| !l || t));
        assert_eq!(m.val, s.val);
        assert_eq!(m.test, s.test);
        assert_eq!(s.mask_labels(1.0, 9).unwrap().labeled, s.train);
        assert_eq!(s.mask_labels(0.5, 4).unwrap(), s.mask_labels(0.5, 4).unwrap());
        assert!((m.label_fraction() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_labeled_set_rejected() {
        let s = make_splits(10, SplitFractions::default(), 3).unwrap();
        assert!(matches!(s.mask_labels(0.01, 0), Err(GraphError::Config(_))));
        assert!(s.mask_labels(0.0, 0).is_err());
    }
}
